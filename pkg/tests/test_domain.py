import numpy as np
import pytest
from numpy.testing import assert_allclose

from curvelab.domain import (
    SphereGrid,
    SurfaceScalar,
    SurfaceVectorField,
    build_grid,
    holomorphy_residual,
    integrate,
    interpolate,
    j_domain,
    mobius_generators,
    overlap_mismatch,
    round_inner,
    surface_derivative,
)
from curvelab.exceptions import ConfigError, InvalidInputError


def _height(grid: SphereGrid) -> SurfaceScalar:
    return SurfaceScalar(grid, (grid.sphere_points(0)[:, 2], grid.sphere_points(1)[:, 2]))


def _first_coordinate(grid: SphereGrid) -> SurfaceScalar:
    return SurfaceScalar(grid, (grid.sphere_points(0)[:, 0], grid.sphere_points(1)[:, 0]))


@pytest.mark.parametrize(
    "n_radial, n_angular, delta",
    [(2, 16, 0.1), (8, 15, 0.1), (8, 8, 0.1), (8, 16, 0.3), (8, 16, 0.0)],
)
def test_build_grid_rejects(n_radial: int, n_angular: int, delta: float) -> None:
    with pytest.raises(ConfigError):
        build_grid(n_radial, n_angular, delta)


def test_grid_layout(grid: SphereGrid) -> None:
    c0, c1 = grid.charts
    assert grid.n_nodes == c0.size + c1.size
    assert c0.owned.sum() == 8 * 16
    assert np.all(np.abs(c0.zeta[c0.owned]) <= 1.0)
    assert np.all(np.abs(c0.zeta[c0.outer]) > 1.0)
    assert c1.theta_offset == pytest.approx(np.pi / 16)
    assert_allclose(np.linalg.norm(grid.sphere_points(1), axis=-1), 1.0)
    assert grid.describe() == {"n_radial": 8, "n_angular": 16, "delta": 0.1}


def test_round_area(grid: SphereGrid) -> None:
    one = SurfaceScalar.from_function(grid, lambda c, z: np.ones(len(z)))
    assert integrate(one) == pytest.approx(4 * np.pi, rel=1e-6)


def test_odd_function_integrates_to_zero(grid: SphereGrid) -> None:
    assert abs(integrate(_height(grid))) < 1e-12


def test_blended_quadrature_agrees(fine_grid: SphereGrid) -> None:
    one = SurfaceScalar.from_function(fine_grid, lambda c, z: np.ones(len(z)))
    assert integrate(one, blended=True) == pytest.approx(4 * np.pi, rel=1e-2)


def test_second_moment(fine_grid: SphereGrid) -> None:
    h = _height(fine_grid)
    square = SurfaceScalar(fine_grid, (h.values[0] ** 2, h.values[1] ** 2))
    assert integrate(square) == pytest.approx(4 * np.pi / 3, rel=1e-8)


def test_overlap_mismatch_of_smooth_data(fine_grid: SphereGrid) -> None:
    assert overlap_mismatch(_first_coordinate(fine_grid)) < 1e-6


def test_derivative_of_first_coordinate(fine_grid: SphereGrid) -> None:
    dx, dy = surface_derivative(_first_coordinate(fine_grid))
    chart = fine_grid.charts[0]
    x, y = chart.zeta.real, chart.zeta.imag
    s = 1 + x**2 + y**2
    own = chart.owned
    assert_allclose(dx.values[0][own], (2 / s - 4 * x**2 / s**2)[own], atol=1e-5)
    assert_allclose(dy.values[0][own], (-4 * x * y / s**2)[own], atol=1e-5)


def test_under_resolved_data_warns(grid: SphereGrid, caplog: pytest.LogCaptureFixture) -> None:
    rough = SurfaceScalar(grid, (np.zeros(grid.charts[0].size), np.ones(grid.charts[1].size)))
    surface_derivative(rough)
    assert "under-resolved" in caplog.text


def test_interpolate_across_charts(fine_grid: SphereGrid) -> None:
    h = _height(fine_grid)
    pts = np.array([0.5 + 0.2j, 2.0 - 1.0j, 0.0])
    exact = (1 - np.abs(pts) ** 2) / (1 + np.abs(pts) ** 2)
    assert_allclose(interpolate(h, pts), exact, atol=1e-6)


def test_mobius_fields_are_holomorphic(grid: SphereGrid) -> None:
    gens = mobius_generators(grid)
    assert [g.index for g in gens] == [1, 2, 3, 4, 5, 6]
    for gen in gens:
        assert holomorphy_residual(gen.field) < 1e-9


def test_from_chart0_matches_generators(grid: SphereGrid) -> None:
    z2 = SurfaceVectorField.from_chart0(grid, lambda c, z: z**2)
    assert_allclose(z2.values[1], mobius_generators(grid)[4].field.values[1], atol=1e-12)


def test_round_inner(fine_grid: SphereGrid) -> None:
    one = mobius_generators(fine_grid)[0].field
    assert round_inner(one, one) == pytest.approx(16 * np.pi / 3, rel=1e-6)
    rotated = j_domain(one)
    assert abs(round_inner(one, rotated)) < 1e-12
    back = j_domain(rotated)
    assert_allclose(back.values[0], -one.values[0])


def test_vector_field_shape_check(grid: SphereGrid) -> None:
    with pytest.raises(InvalidInputError):
        SurfaceVectorField(grid, (np.zeros(3, dtype=complex), np.zeros(3, dtype=complex)))
