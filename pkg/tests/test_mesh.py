"""Grid, field, norm, and i/o tests for the mesh module."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiplab import mesh
from hiplab.errors import GridMismatchError
from hiplab.mesh import Grid, ScalarField, VectorField


class TestGrid:
    def test_spacing_and_shape(self):
        g = Grid(10)
        assert g.h == pytest.approx(0.1)
        assert g.shape == (11, 11)
        assert g.num_interior == 81

    def test_rejects_tiny_grids(self):
        with pytest.raises(ValueError):
            Grid(3)

    def test_trapezoid_weights_integrate_one(self):
        g = Grid(17)
        assert g.trapezoid_weights().sum() == pytest.approx(1.0, abs=1e-14)

    def test_coords_orientation(self):
        g = Grid(8)
        X, Y = g.coords()
        # values[j, i] convention: X varies along the inner axis
        assert X[0, 3] == pytest.approx(3 * g.h)
        assert Y[3, 0] == pytest.approx(3 * g.h)


class TestScalarField:
    def test_values_are_read_only(self):
        f = ScalarField.zeros(Grid(8))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ScalarField(Grid(8), np.zeros((4, 4)))

    def test_non_finite_rejected(self):
        v = np.zeros((9, 9))
        v[2, 2] = np.nan
        with pytest.raises(ValueError):
            ScalarField(Grid(8), v)

    def test_grid_mismatch_in_arithmetic(self):
        with pytest.raises(GridMismatchError):
            ScalarField.zeros(Grid(8)) + ScalarField.zeros(Grid(16))

    def test_boundary_ring_size(self):
        f = ScalarField.zeros(Grid(8))
        assert f.boundary_ring().size == 4 * 8


class TestDerivatives:
    def test_gradient_exact_on_quadratics(self):
        # central and one-sided second-order stencils are exact for degree 2
        grid = Grid(16)
        f = ScalarField.from_function(grid, lambda x, y: x**2 + 3 * x * y - y**2)
        g = mesh.gradient(f)
        X, Y = grid.coords()
        np.testing.assert_allclose(g.x, 2 * X + 3 * Y, atol=1e-12)
        np.testing.assert_allclose(g.y, 3 * X - 2 * Y, atol=1e-12)

    def test_gradient_second_order(self):
        errs = []
        for n in (16, 32):
            grid = Grid(n)
            f = ScalarField.from_function(
                grid, lambda x, y: np.sin(2 * np.pi * x) * np.cos(np.pi * y)
            )
            g = mesh.gradient(f)
            X, Y = grid.coords()
            exact = 2 * np.pi * np.cos(2 * np.pi * X) * np.cos(np.pi * Y)
            errs.append(np.abs(g.x - exact).max())
        assert errs[0] / errs[1] > 3.0

    def test_divergence_gradient_adjoint_for_ring_zero_fields(self):
        grid = Grid(24)
        rng = np.random.default_rng(5)
        f = mesh.random_band_limited(grid, 6, 1)
        vx = np.zeros(grid.shape)
        vy = np.zeros(grid.shape)
        vx[1:-1, 1:-1] = rng.standard_normal((23, 23))
        vy[1:-1, 1:-1] = rng.standard_normal((23, 23))
        v = VectorField(grid, vx, vy)
        lhs = mesh.vector_l2_inner(mesh.gradient(f), v)
        rhs = -mesh.l2_inner(f, mesh.divergence(v))
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestSpectralNorms:
    def test_sine_round_trip(self):
        grid = Grid(32)
        c = np.zeros((31, 31))
        c[1, 2] = 0.7
        f = mesh.field_from_sine_coefficients(grid, c)
        back = mesh.sine_coefficients(f)
        np.testing.assert_allclose(back, c, atol=1e-13)

    def test_sine_requires_zero_ring(self):
        grid = Grid(16)
        with pytest.raises(ValueError):
            mesh.sine_coefficients(ScalarField.constant(grid, 1.0))

    def test_s0_matches_trapezoid_l2(self):
        grid = Grid(32)
        f = mesh.random_band_limited(grid, 8, 3)
        assert mesh.sobolev_norm(f, 0.0) == pytest.approx(mesh.l2_norm(f), rel=1e-12)

    def test_single_mode_value(self):
        # f = sin(k pi x) sin(l pi y) has ||f||_{H^s} = (1+pi^2(k^2+l^2))^{s/2}/2
        grid, k, l, s = Grid(64), 2, 3, 1.5
        f = ScalarField.from_function(
            grid, lambda x, y: np.sin(k * np.pi * x) * np.sin(l * np.pi * y)
        )
        expected = 0.5 * (1 + np.pi**2 * (k**2 + l**2)) ** (s / 2)
        assert mesh.sobolev_norm(f, s) == pytest.approx(expected, rel=1e-12)

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            mesh.sobolev_norm(ScalarField.zeros(Grid(8)), -1.0)

    def test_h1_between_l2_and_spectral_h1(self):
        grid = Grid(48)
        f = mesh.random_band_limited(grid, 6, 9)
        assert mesh.l2_norm(f) < mesh.h1_norm(f)
        # the stencil H1 norm approximates the spectral one on smooth fields
        assert mesh.h1_norm(f) == pytest.approx(mesh.sobolev_norm(f, 1.0), rel=2e-2)

    def test_c2_norm_scaling(self):
        grid = Grid(16)
        f = mesh.random_band_limited(grid, 4, 2)
        assert mesh.c2_norm(3.0 * f) == pytest.approx(3.0 * mesh.c2_norm(f), rel=1e-12)


class TestRandomFields:
    def test_zero_ring_and_determinism(self):
        grid = Grid(32)
        a = mesh.random_band_limited(grid, 5, 77)
        b = mesh.random_band_limited(grid, 5, 77)
        assert np.array_equal(a.values, b.values)
        assert np.abs(a.boundary_ring()).max() < 1e-13

    def test_band_limit_respected(self):
        grid = Grid(32)
        f = mesh.random_band_limited(grid, 4, 1)
        c = mesh.sine_coefficients(f)
        assert np.abs(c[4:, :]).max() < 1e-13
        assert np.abs(c[:, 4:]).max() < 1e-13

    def test_kmax_bounds(self):
        with pytest.raises(ValueError):
            mesh.random_band_limited(Grid(8), 8, 0)


class TestFieldIO:
    @settings(max_examples=20, deadline=None)
    @given(
        n=st.integers(min_value=4, max_value=12),
        seed=st.integers(min_value=0, max_value=10**6),
    )
    def test_round_trip_bit_exact(self, tmp_path_factory, n, seed):
        grid = Grid(n)
        rng = np.random.default_rng(seed)
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        path = tmp_path_factory.mktemp("io") / "f.field"
        mesh.write_field(path, f)
        back = mesh.read_field(path)
        assert back.grid == grid
        assert np.array_equal(back.values, f.values)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.field"
        path.write_bytes(b"something else entirely\n")
        with pytest.raises(ValueError):
            mesh.read_field(path)

    def test_header_format(self, tmp_path):
        path = tmp_path / "f.field"
        mesh.write_field(path, ScalarField.zeros(Grid(6)))
        assert path.read_bytes().startswith(b"hipfield 1 6\n")
