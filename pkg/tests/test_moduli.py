import numpy as np
import pytest
from numpy.testing import assert_allclose

from curvelab.ambient import ComplexProjectivePlane, Perturbation, SphereProduct, StructurePath, standard_j
from curvelab.domain import SphereGrid, build_grid
from curvelab.exceptions import NotImmersedError, UnknownClassError
from curvelab.mapspace import SurfaceMap, rational_map
from curvelab.moduli import (
    LineChart,
    ModuliFrame,
    SphereFamilyChart,
    build_frame,
    class_checks,
    continue_path,
    default_param_grid,
    full_gram_rank,
    gram_rank,
    invariant_integral,
    pfaffian,
    quotient_compatible_J,
)

SHAPE = np.array(
    [
        [1.0, 0.3, 0.2, 0.0],
        [0.3, -0.5, 0.0, 0.4],
        [0.2, 0.0, 0.8, -0.3],
        [0.0, 0.4, -0.3, 0.2],
    ]
)


@pytest.fixture(scope="module")
def line_frame(line: SurfaceMap, cp2: ComplexProjectivePlane) -> ModuliFrame:
    return build_frame(line, cp2)


@pytest.fixture(scope="module")
def sphere_frame(sphere: SurfaceMap, s2xs2: SphereProduct) -> ModuliFrame:
    return build_frame(sphere, s2xs2)


def test_gram_rank() -> None:
    a = np.zeros((4, 4))
    a[0, 1], a[1, 0] = 2.0, -2.0
    assert gram_rank(a) == 2
    a[2, 3], a[3, 2] = 1e-12, -1e-12
    assert gram_rank(a) == 2
    assert gram_rank(standard_j(2)) == 4
    assert gram_rank(np.zeros((3, 3))) == 0


def test_pfaffian(rng: np.random.Generator) -> None:
    b = rng.normal(size=(4, 4))
    a = b - b.T
    assert pfaffian(a) ** 2 == pytest.approx(np.linalg.det(a), rel=1e-10)
    assert pfaffian(standard_j(1)) == pytest.approx(-1.0)
    assert pfaffian(np.zeros((0, 0))) == 1.0
    with pytest.raises(ValueError):
        pfaffian(np.zeros((6, 6)))


@pytest.mark.parametrize(
    "manifold, name, defect, regular, indecomposable",
    [
        (ComplexProjectivePlane(), "L", 0, True, True),
        (ComplexProjectivePlane(), "2L", 0, True, False),
        (ComplexProjectivePlane(), "3L", 2, True, False),
        (SphereProduct(0.5), "S2xpt", 0, True, True),
        (SphereProduct(0.5), "diagonal", 0, True, False),
        (SphereProduct(0.5), "antidiagonal", 0, False, True),
    ],
)
def test_class_checks(
    manifold: ComplexProjectivePlane | SphereProduct,
    name: str,
    defect: int,
    regular: bool,
    indecomposable: bool,
) -> None:
    check = class_checks(manifold, name)
    assert check.adjunction_defect == defect
    assert check.hls_regular is regular
    assert check.indecomposable is indecomposable
    assert check.embedded_expected is (defect == 0)


def test_class_checks_unknown_class(cp2: ComplexProjectivePlane) -> None:
    with pytest.raises(UnknownClassError):
        class_checks(cp2, "diagonal")


def test_frame_needs_an_immersion(cp2: ComplexProjectivePlane, grid: SphereGrid) -> None:
    double_cover = rational_map(cp2, grid, [np.eye(3)[1], np.zeros(3), np.eye(3)[0]], "2L")
    with pytest.raises(NotImmersedError):
        build_frame(double_cover, cp2)


@pytest.mark.slow
def test_line_frame(line_frame: ModuliFrame) -> None:
    assert (line_frame.kernel_dim, line_frame.quotient_dim) == (10, 4)
    assert gram_rank(line_frame.gram) == 4
    assert full_gram_rank(line_frame) == 4
    assert line_frame.aut_residual <= 1e-8
    assert np.array_equal(line_frame.gram, -line_frame.gram.T)
    assert np.linalg.eigvalsh(line_frame.metric_gram).min() > 0


@pytest.mark.slow
def test_sphere_frame(sphere_frame: ModuliFrame) -> None:
    assert (sphere_frame.kernel_dim, sphere_frame.quotient_dim) == (8, 2)
    assert gram_rank(sphere_frame.gram) == 2


@pytest.mark.slow
def test_quotient_structure(line_frame: ModuliFrame) -> None:
    j = quotient_compatible_J(line_frame)
    w = line_frame.gram
    assert_allclose(j @ j, -np.eye(4), atol=1e-8)
    assert_allclose(j.T @ w @ j, w, atol=1e-8 * np.abs(w).max())
    tame = 0.5 * (w @ j + (w @ j).T)
    assert np.linalg.eigvalsh(tame).min() > 0


def test_line_chart_samples(cp2: ComplexProjectivePlane, grid: SphereGrid, rng: np.random.Generator) -> None:
    chart = LineChart(cp2, grid)
    points, weights = chart.samples(8, rng)
    assert len(points) == 8
    assert np.all(weights > 0)
    f = chart.section(points[0], np.zeros(4))
    assert f.homology_class == "L"
    moved = chart.section(points[0], np.array([1e-3, 0.0, 0.0, 0.0]), f)
    assert moved.charts == f.charts


def test_sphere_family_samples(s2xs2: SphereProduct, grid: SphereGrid, rng: np.random.Generator) -> None:
    param = default_param_grid()
    chart = SphereFamilyChart(s2xs2, grid, param)
    points, weights = chart.samples(0, rng)
    assert len(points) == 2 * param.n_radial * param.n_angular
    assert weights.sum() == pytest.approx(2 * np.pi, rel=1e-6)


@pytest.mark.slow
def test_sphere_family_integral(s2xs2: SphereProduct, grid: SphereGrid) -> None:
    chart = SphereFamilyChart(s2xs2, grid, default_param_grid())
    est = invariant_integral(chart, s2xs2)
    assert est.method == "quadrature"
    assert est.n_rejected == 0 and est.n_solved == 0
    assert est.value == pytest.approx(1.0, abs=0.02)
    assert est.raw == pytest.approx(2 * est.value)
    parallel = invariant_integral(chart, s2xs2, workers=3)
    assert parallel.value == est.value


@pytest.mark.slow
def test_continuation_away_from_the_perturbation(line: SurfaceMap, cp2: ComplexProjectivePlane) -> None:
    far = Perturbation(0, (0.0, 0.0, 2.0, 0.0), 0.3, tuple(map(tuple, 0.2 * np.eye(4))))
    trace = continue_path(line, StructurePath(cp2, far), 2)
    assert not trace.truncated
    assert trace.lams == [0.5, 1.0]
    assert trace.kernel_dims == [10, 10]
    assert trace.gram_ranks == [4, 4]
    assert trace.iterations == [0, 0]
    for f in trace.maps:
        assert np.array_equal(f.flat(), line.flat())
    assert [row["lam"] for row in trace.rows()] == [0.5, 1.0]


@pytest.mark.slow
def test_continuation_through_the_perturbation(line: SurfaceMap, cp2: ComplexProjectivePlane) -> None:
    bump = Perturbation(0, (0.0,) * 4, 0.8, tuple(map(tuple, 0.1 * SHAPE)))
    sp = StructurePath(cp2, bump)
    trace = continue_path(line, sp, 10)
    assert not trace.truncated, trace.failure
    assert trace.lams == pytest.approx([k / 10 for k in range(1, 11)])
    assert trace.kernel_dims == [10] * 10
    assert trace.gram_ranks == [4] * 10
    assert min(trace.min_pairings) >= 1e-6
    assert trace.iterations[0] > 0
    assert max(trace.residuals) <= 1e-6
    fine = continue_path(line, sp, 20, frames=False)
    assert not fine.truncated
    assert np.abs(fine.maps[-1].flat() - trace.maps[-1].flat()).max() <= 1e-6


def test_line_chart_integral(cp2: ComplexProjectivePlane, grid: SphereGrid) -> None:
    est = invariant_integral(LineChart(cp2, grid), cp2, mc_samples=16, seed=0)
    assert est.method == "importance"
    assert est.n_rejected == 0 and est.n_samples == 16
    assert est.value > 0
    assert est.stderr <= 0.1 * est.value


@pytest.mark.slow
def test_sphere_family_integral_is_path_invariant(s2xs2: SphereProduct, grid: SphereGrid) -> None:
    bump = Perturbation(0, (0.0,) * 4, 0.6, tuple(map(tuple, 0.05 * SHAPE)), cutoff=3.0)
    sp = StructurePath(s2xs2, bump)
    chart = SphereFamilyChart(s2xs2, grid, build_grid(4, 8, 0.1))
    base = invariant_integral(chart, sp.at(0.0), bump)
    moved = invariant_integral(chart, sp.at(0.3), bump)
    assert base.n_solved == 0
    assert moved.n_solved > 0
    assert moved.n_rejected == 0
    tol = 3.0 * np.hypot(base.stderr, moved.stderr) + 1e-3 * abs(base.value)
    assert abs(moved.value - base.value) <= tol
