from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from curvelab.ambient import ComplexProjectivePlane, SphereProduct, pair
from curvelab.domain import SphereGrid, SurfaceVectorField, integrate, mobius_generators
from curvelab.exceptions import InvalidInputError, NotImmersedError
from curvelab.mapspace import (
    SurfaceMap,
    VariationField,
    affine_family,
    antidiagonal_map,
    area,
    case_two_partner,
    chern_number,
    constant_map,
    diagonal_map,
    dump_columns,
    exterior_derivative_check,
    exterior_derivative_terms,
    form_eval,
    form_gram,
    homology_class_of,
    homology_coordinates,
    is_immersed_symplectic,
    is_simple,
    jtilde,
    l2_inner,
    line_map,
    load_columns,
    metric_gram,
    pullback_area,
    random_variation,
    rational_map,
    split_variation,
    tangent_variation,
)


@pytest.fixture(scope="module")
def double_cover(cp2: ComplexProjectivePlane, grid: SphereGrid) -> SurfaceMap:
    return rational_map(cp2, grid, [np.eye(3)[1], np.zeros(3), np.eye(3)[0]], "2L")


def _norm(f: SurfaceMap, t: VariationField) -> float:
    return float(np.sqrt(l2_inner(f, t, t)))


def _random_field(grid: SphereGrid, rng: np.random.Generator) -> SurfaceVectorField:
    pts = (grid.sphere_points(0), grid.sphere_points(1))
    vals = [np.zeros(ch.size, dtype=complex) for ch in grid.charts]
    for gen in mobius_generators(grid):
        coef = rng.normal(size=4)
        for c in (0, 1):
            vals[c] = vals[c] + (coef[0] + pts[c] @ coef[1:]) * gen.field.values[c]
    return SurfaceVectorField(grid, (vals[0], vals[1]))


def test_line_area_and_class(fine_line: SurfaceMap) -> None:
    assert area(fine_line) == pytest.approx(1.0, rel=1e-8)
    assert_allclose(homology_coordinates(fine_line), (1.0,), atol=1e-8)
    assert homology_class_of(fine_line) == "L"
    assert fine_line.overlap_agreement() < 1e-8


def test_conic_class(cp2: ComplexProjectivePlane, fine_grid: SphereGrid) -> None:
    conic = rational_map(cp2, fine_grid, np.eye(3), "2L")
    assert area(conic) == pytest.approx(2.0, rel=1e-6)
    assert homology_class_of(conic) == "2L"


@pytest.mark.parametrize("kind, coords", [("diagonal", (1.0, 1.0)), ("antidiagonal", (1.0, -1.0))])
def test_product_classes(kind: str, coords: tuple[float, float], fine_grid: SphereGrid) -> None:
    m = SphereProduct(0.5)
    f = diagonal_map(m, fine_grid) if kind == "diagonal" else antidiagonal_map(m, fine_grid)
    assert f.homology_class == kind
    assert_allclose(homology_coordinates(f), coords, atol=1e-6)
    assert area(f) == pytest.approx(m.lookup_class(f.homology_class).area, rel=1e-6)


def test_sphere_section(sphere: SurfaceMap) -> None:
    assert_allclose(homology_coordinates(sphere), (1.0, 0.0), atol=1e-6)
    assert homology_class_of(sphere) == "S2xpt"


def test_chern_numbers(fine_line: SurfaceMap, sphere: SurfaceMap) -> None:
    assert chern_number(fine_line) == pytest.approx(3.0, abs=1e-3)
    assert chern_number(sphere) == pytest.approx(2.0, abs=1e-3)


def test_immersion_checks(
    line: SurfaceMap, double_cover: SurfaceMap, cp2: ComplexProjectivePlane, grid: SphereGrid
) -> None:
    ok, margin = is_immersed_symplectic(line)
    assert ok and margin > 0
    assert not is_immersed_symplectic(double_cover)[0]
    assert not is_immersed_symplectic(constant_map(cp2, grid, 0, np.full(4, 0.3)))[0]


def test_simple(line: SurfaceMap, double_cover: SurfaceMap) -> None:
    assert is_simple(line)
    assert not is_simple(double_cover)


def test_form_is_exactly_antisymmetric(tilted_line: SurfaceMap, rng: np.random.Generator) -> None:
    t1, t2 = random_variation(tilted_line, rng), random_variation(tilted_line, rng)
    assert form_eval(tilted_line, t1, t2).value == -form_eval(tilted_line, t2, t1).value
    gram = form_gram(tilted_line, [t1, t2, random_variation(tilted_line, rng)])
    assert np.array_equal(gram, -gram.T)
    assert gram[0, 1] == pytest.approx(form_eval(tilted_line, t1, t2).value, rel=1e-12)


def test_form_vanishes_on_tangent_variations(
    tilted_line: SurfaceMap, grid: SphereGrid, rng: np.random.Generator
) -> None:
    for _ in range(5):
        tau = tangent_variation(tilted_line, _random_field(grid, rng))
        t = random_variation(tilted_line, rng)
        value = form_eval(tilted_line, tau, t).value
        assert abs(value) <= 1e-10 * _norm(tilted_line, tau) * _norm(tilted_line, t)


def test_tangent_variation_vanishes_on_non_immersed_maps_too(
    double_cover: SurfaceMap, grid: SphereGrid, rng: np.random.Generator
) -> None:
    tau = tangent_variation(double_cover, _random_field(grid, rng))
    t = random_variation(double_cover, rng)
    value = form_eval(double_cover, tau, t).value
    assert abs(value) <= 1e-10 * _norm(double_cover, tau) * _norm(double_cover, t)


def test_positivity_and_partner(
    cp2: ComplexProjectivePlane, fine_line: SurfaceMap, rng: np.random.Generator
) -> None:
    for _ in range(5):
        t = random_variation(fine_line, rng)
        assert form_eval(fine_line, t, jtilde(cp2, fine_line, t)).value > 0
        partner = case_two_partner(cp2, fine_line, t)
        assert form_eval(fine_line, t, partner).value > 1e-4 * _norm(fine_line, t) * _norm(
            fine_line, partner
        )


def test_split_variation(cp2: ComplexProjectivePlane, fine_line: SurfaceMap, rng: np.random.Generator) -> None:
    t = random_variation(fine_line, rng)
    tan, perp = split_variation(fine_line, t)
    assert_allclose((tan + perp).comps[0], t.comps[0], atol=1e-12)
    for c in (0, 1):
        forms = fine_line.omega_matrices(c)
        fx, fy = fine_line.jacobian[c]
        scale = np.abs(pair(forms, t.comps[c], fx)).max()
        assert np.abs(pair(forms, perp.comps[c], fx)).max() < 1e-10 * scale
        assert np.abs(pair(forms, perp.comps[c], fy)).max() < 1e-10 * scale


def test_split_needs_immersion(cp2: ComplexProjectivePlane, grid: SphereGrid, rng: np.random.Generator) -> None:
    const = constant_map(cp2, grid, 0, np.full(4, 0.3))
    with pytest.raises(NotImmersedError):
        split_variation(const, random_variation(const, rng))


def test_compatibility_on_holomorphic_curve(
    cp2: ComplexProjectivePlane, fine_line: SurfaceMap, rng: np.random.Generator
) -> None:
    t1, t2 = random_variation(fine_line, rng), random_variation(fine_line, rng)
    rotated = form_eval(fine_line, jtilde(cp2, fine_line, t1), jtilde(cp2, fine_line, t2)).value
    assert rotated == pytest.approx(form_eval(fine_line, t1, t2).value, abs=1e-8 * _norm(fine_line, t1) * _norm(fine_line, t2))
    g = metric_gram(cp2, fine_line, [t1, t2])
    assert np.linalg.eigvalsh(g).min() > 0


def test_closedness(fine_line: SurfaceMap, rng: np.random.Generator) -> None:
    taus = [random_variation(fine_line, rng).scale(0.2) for _ in range(3)]
    family = affine_family(fine_line, taus)
    terms = exterior_derivative_terms(family, 1e-2)
    assert abs(sum(terms)) <= 1e-4 * max(abs(x) for x in terms)
    assert exterior_derivative_check(family, 1e-2) == pytest.approx(sum(terms))


def test_closedness_degenerate_family(tilted_line: SurfaceMap, rng: np.random.Generator) -> None:
    tau = random_variation(tilted_line, rng)
    family = affine_family(tilted_line, [tau, random_variation(tilted_line, rng), VariationField.zeros(tilted_line)])
    assert abs(exterior_derivative_check(family, 1e-2)) < 1e-12


def test_small_cube_warns(tilted_line: SurfaceMap, rng: np.random.Generator, caplog: pytest.LogCaptureFixture) -> None:
    taus = [random_variation(tilted_line, rng) for _ in range(3)]
    exterior_derivative_check(affine_family(tilted_line, taus), 1e-5)
    assert "roundoff" in caplog.text


def test_variations_must_share_a_map(line: SurfaceMap, fine_line: SurfaceMap, rng: np.random.Generator) -> None:
    with pytest.raises(InvalidInputError):
        _ = random_variation(line, rng) + VariationField.zeros(fine_line)


def test_columns_file(tmp_path: Path, tilted_line: SurfaceMap, rng: np.random.Generator) -> None:
    t = random_variation(tilted_line, rng)
    path = tmp_path / "map.txt"
    dump_columns(path, tilted_line, t)
    f, loaded = load_columns(path, tilted_line.manifold, tilted_line.grid)
    assert f.charts == tilted_line.charts
    assert_allclose(f.flat(), tilted_line.flat(), rtol=0, atol=0)
    assert loaded is not None
    assert_allclose(loaded.flat(), t.flat(), rtol=0, atol=0)


def test_line_map_on_other_normal(cp2: ComplexProjectivePlane, grid: SphereGrid) -> None:
    f = line_map(cp2, grid, normal=(1.0, 0.0, 0.0))
    assert homology_class_of(f) == "L"


def test_pullback_area_density(fine_line: SurfaceMap, cp2: ComplexProjectivePlane, grid: SphereGrid) -> None:
    assert integrate(pullback_area(fine_line), measure="flat") == pytest.approx(1.0, rel=1e-8)
    flat = pullback_area(constant_map(cp2, grid, 0, np.full(4, 0.3)))
    assert np.all(flat.values[0] == 0.0) and np.all(flat.values[1] == 0.0)
