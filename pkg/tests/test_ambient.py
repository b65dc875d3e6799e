import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from curvelab.ambient import (
    AmbientManifold,
    AmbientPoint,
    AmbientVector,
    ComplexProjectivePlane,
    ManifoldName,
    Perturbation,
    SphereProduct,
    StructurePath,
    VectorFieldFn,
    build_manifold,
    j_apply,
    nijenhuis,
    nijenhuis_pointwise,
    omega,
    pair,
    path_J,
    polar_compatible_J,
    standard_j,
)
from curvelab.exceptions import (
    DecompositionError,
    InvalidInputError,
    NumericalConfigError,
    PathOutOfRangeError,
    UnknownClassError,
)


def _bump(dim: int, amplitude: float, radius: float = 0.5) -> Perturbation:
    shape = np.array(
        [
            [1.0, 0.3, 0.2, 0.0],
            [0.3, -0.5, 0.0, 0.4],
            [0.2, 0.0, 0.8, -0.3],
            [0.0, 0.4, -0.3, 0.2],
        ]
    )[:dim, :dim]
    mat = amplitude * shape
    return Perturbation(0, (0.0,) * dim, radius, tuple(map(tuple, mat)))


def _points(rng: np.random.Generator, n: int = 6) -> np.ndarray:
    return rng.uniform(-0.8, 0.8, size=(n, 4))


@pytest.mark.parametrize("name", [ManifoldName.CP2, ManifoldName.S2xS2])
def test_kahler_triple(name: ManifoldName, rng: np.random.Generator) -> None:
    m = build_manifold(name, 0.5)
    x = _points(rng)
    for chart in range(m.n_charts):
        g = m.metric_matrix(chart, x)
        w = m.omega_matrix(chart, x)
        j = m.j_matrix(chart, x)
        assert_allclose(w, np.swapaxes(j, -1, -2) @ g, atol=1e-14)
        assert_allclose(j @ j, -np.eye(4)[None].repeat(len(x), 0), atol=1e-15)
        assert np.all(np.linalg.eigvalsh(g) > 0)


def test_standard_j_rotates_each_plane() -> None:
    j = standard_j(2)
    assert_array_equal(j @ np.array([1.0, 0, 0, 0]), [0, 1.0, 0, 0])
    assert_array_equal(j @ j, -np.eye(4))


def test_pair_is_exactly_antisymmetric(cp2: ComplexProjectivePlane, rng: np.random.Generator) -> None:
    x = _points(rng, 20)
    forms = cp2.omega_matrix(0, x)
    u, v = rng.normal(size=(2, 20, 4))
    assert_array_equal(pair(forms, u, v), -pair(forms, v, u))
    assert_array_equal(pair(forms, u, u), np.zeros(20))


@pytest.mark.parametrize("name", [ManifoldName.CP2, ManifoldName.S2xS2])
def test_transitions_preserve_forms(name: ManifoldName, rng: np.random.Generator) -> None:
    m = build_manifold(name, 0.3)
    x = rng.uniform(0.3, 0.9, size=(5, 4))
    for src in range(m.n_charts):
        for dst in range(m.n_charts):
            y = m.transition(src, dst, x)
            assert_allclose(m.transition(dst, src, y), x, atol=1e-12)
            t = m.transition_jacobian(src, dst, x)
            pulled = np.swapaxes(t, -1, -2) @ m.omega_matrix(dst, y) @ t
            assert_allclose(pulled, m.omega_matrix(src, x), atol=1e-10)


def test_transition_jacobian_matches_differences(cp2: ComplexProjectivePlane) -> None:
    x = np.array([[0.4, -0.3, 0.7, 0.2]])
    h = 1e-6
    jac = cp2.transition_jacobian(0, 2, x)[0]
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd = (cp2.transition(0, 2, x + e) - cp2.transition(0, 2, x - e))[0] / (2 * h)
        assert_allclose(jac[:, k], fd, atol=1e-8)


@pytest.mark.parametrize("name", [ManifoldName.CP2, ManifoldName.S2xS2])
def test_linear_fields_agree_across_charts(name: ManifoldName, rng: np.random.Generator) -> None:
    m = build_manifold(name)
    gen = m.random_generator(rng)
    x = rng.uniform(0.3, 0.9, size=(4, 4))
    v = m.linear_vector_field(0, x, gen)
    for dst in range(1, m.n_charts):
        y = m.transition(0, dst, x)
        moved = np.einsum("nab,nb->na", m.transition_jacobian(0, dst, x), v)
        assert_allclose(m.linear_vector_field(dst, y, gen), moved, atol=1e-10)


def test_ricci_form_is_einstein_on_cp2(cp2: ComplexProjectivePlane, rng: np.random.Generator) -> None:
    x = _points(rng, 4)
    assert_allclose(cp2.ricci_form_matrix(0, x), 6 * np.pi * cp2.omega_matrix(0, x), atol=1e-5)


def test_class_table(cp2: ComplexProjectivePlane) -> None:
    s = SphereProduct(0.5)
    assert cp2.lookup_class("L").c1 == 3
    assert s.lookup_class("antidiagonal").area == pytest.approx(0.5)
    assert s.lookup_class("S2xpt").coords == (1, 0)
    with pytest.raises(UnknownClassError):
        cp2.lookup_class("S2xpt")


def test_negative_area_asymmetry_is_rejected() -> None:
    with pytest.raises(InvalidInputError):
        SphereProduct(-0.1)


def test_single_point_api(cp2: ComplexProjectivePlane) -> None:
    p = AmbientPoint(1, np.array([0.1, 0.2, -0.3, 0.4]))
    u = AmbientVector(p, np.array([1.0, 0.0, 0.0, 0.0]))
    ju = j_apply(cp2, p, u)
    assert omega(cp2, p, u, ju) > 0
    assert omega(cp2, p, u, u) == 0.0
    with pytest.raises(InvalidInputError):
        AmbientVector(p, np.zeros(3))
    with pytest.raises(InvalidInputError):
        omega(cp2, AmbientPoint(5, p.coords), u, ju)


def _random_pair(rng: np.random.Generator, n: int = 4) -> tuple[np.ndarray, np.ndarray]:
    a = rng.normal(size=(n, n))
    b = rng.normal(size=(n, n))
    return a - a.T, b @ b.T + np.eye(n)


def test_polar_structure_is_compatible(rng: np.random.Generator) -> None:
    for _ in range(10):
        w, g = _random_pair(rng)
        j = polar_compatible_J(w, g)
        assert_allclose(j @ j, -np.eye(4), atol=1e-10)
        assert_allclose(j.T @ w @ j, w, atol=1e-10)
        tame = 0.5 * (w @ j + (w @ j).T)
        assert np.linalg.eigvalsh(tame).min() > 0


def test_polar_recovers_kahler_structure(cp2: ComplexProjectivePlane) -> None:
    x = np.array([[0.2, 0.1, -0.4, 0.3]])
    j = polar_compatible_J(cp2.omega_matrix(0, x)[0], cp2.metric_matrix(0, x)[0])
    assert_allclose(j, standard_j(2), atol=1e-12)


def test_polar_is_basis_covariant(rng: np.random.Generator) -> None:
    w, g = _random_pair(rng)
    j = polar_compatible_J(w, g)
    t = rng.normal(size=(4, 4)) + 3 * np.eye(4)
    moved = polar_compatible_J(t.T @ w @ t, t.T @ g @ t)
    assert_allclose(moved, np.linalg.solve(t, j @ t), atol=1e-9)


@pytest.mark.parametrize(
    "w, g, error",
    [
        (np.zeros((4, 4)), np.eye(4), DecompositionError),
        (standard_j(2), -np.eye(4), DecompositionError),
        (np.ones((4, 4)), np.eye(4), DecompositionError),
        (standard_j(2), np.eye(2), InvalidInputError),
    ],
)
def test_polar_rejects_bad_input(w: np.ndarray, g: np.ndarray, error: type[Exception]) -> None:
    with pytest.raises(error):
        polar_compatible_J(w, g)


def test_path_equals_base_outside_support(cp2: ComplexProjectivePlane) -> None:
    sp = StructurePath(cp2, _bump(4, 0.2, radius=0.1))
    far = np.array([[3.0, 0.0, 0.0, 0.0]])
    assert_array_equal(sp.at(0.7).j_matrix(0, far), cp2.j_matrix(0, far))
    assert sp.at(0.0).integrable and not sp.at(0.5).integrable


def test_path_structure_inside_support(cp2: ComplexProjectivePlane) -> None:
    sp = StructurePath(cp2, _bump(4, 0.1))
    p = AmbientPoint(0, np.array([0.05, -0.02, 0.1, 0.0]))
    j = path_J(sp, 1.0, p)
    w = cp2.omega_matrix(0, p.coords[None])[0]
    assert_allclose(j @ j, -np.eye(4), atol=1e-12)
    assert_allclose(j.T @ w @ j, w, atol=1e-12)
    assert np.abs(j - standard_j(2)).max() > 1e-3


def test_path_out_of_range(cp2: ComplexProjectivePlane) -> None:
    mat = tuple(tuple(-50.0 * row) for row in np.eye(4))
    sp = StructurePath(cp2, Perturbation(0, (0.0,) * 4, 0.5, mat))
    with pytest.raises(PathOutOfRangeError):
        sp.at(1.0).j_matrix(0, np.zeros((1, 4)))
    with pytest.raises(InvalidInputError):
        sp.at(1.5)


def _const(v: np.ndarray) -> VectorFieldFn:
    return lambda q: v


def test_nijenhuis_vanishes_for_integrable(cp2: ComplexProjectivePlane) -> None:
    p = AmbientPoint(0, np.array([0.2, -0.1, 0.3, 0.1]))
    e = np.eye(4)
    n = nijenhuis(cp2, p, _const(e[0]), _const(e[2]))
    assert_allclose(n.comps, 0.0, atol=1e-12)


def test_nijenhuis_tensor_identities(cp2: ComplexProjectivePlane) -> None:
    src = StructurePath(cp2, _bump(4, 0.15)).at(1.0)
    x = np.array([0.1, 0.05, -0.1, 0.2])
    p = AmbientPoint(0, x)
    e = np.eye(4)
    u, v = _const(e[0]), _const(e[2])
    n_uv = nijenhuis(src, p, u, v, richardson=True).comps
    n_vu = nijenhuis(src, p, v, u, richardson=True).comps
    assert np.linalg.norm(n_uv) > 1e-3
    assert_allclose(n_uv, -n_vu, atol=1e-9)

    def ju(q: np.ndarray) -> np.ndarray:
        return src.j_matrix(0, q[None])[0] @ e[0]

    j = src.j_matrix(0, x[None])[0]
    n_juv = nijenhuis(src, p, ju, v, richardson=True).comps
    assert_allclose(n_juv, -j @ n_uv, atol=1e-6)

    batched = nijenhuis_pointwise(src, 0, x[None], e[0][None], e[2][None])[0]
    assert_allclose(batched, n_uv, rtol=1e-5, atol=1e-8)


def test_nijenhuis_on_the_sphere_product(s2xs2: SphereProduct) -> None:
    src = StructurePath(s2xs2, _bump(4, 0.15)).at(1.0)
    p = AmbientPoint(0, np.array([0.1, 0.05, -0.1, 0.2]))
    e = np.eye(4)
    coarse = nijenhuis(src, p, _const(e[0]), _const(e[2]), h_fd=1e-4).comps
    fine = nijenhuis(src, p, _const(e[0]), _const(e[2]), h_fd=5e-5).comps
    assert np.linalg.norm(coarse) > 1e-4
    assert_allclose(fine, coarse, rtol=1e-4, atol=1e-4 * np.linalg.norm(coarse))
    assert_allclose(nijenhuis(s2xs2, p, _const(e[0]), _const(e[2])).comps, 0.0, atol=1e-12)


def test_nijenhuis_only_sees_values_at_the_point(cp2: ComplexProjectivePlane) -> None:
    src = StructurePath(cp2, _bump(4, 0.15)).at(1.0)
    x = np.array([0.1, 0.05, -0.1, 0.2])
    p = AmbientPoint(0, x)
    e = np.eye(4)
    a = 0.5 * np.arange(16.0).reshape(4, 4) / 16.0

    def u(q: np.ndarray) -> np.ndarray:
        return e[0] + a @ (q - x) + 0.3 * np.sin(q - x)

    def v(q: np.ndarray) -> np.ndarray:
        d = q - x
        return e[2] + np.array([d @ d, 0.0, np.sin(d[0]), 0.0]) + 0.2 * d[::-1]

    expected = nijenhuis(src, p, _const(e[0]), _const(e[2]), richardson=True).comps
    assert np.linalg.norm(expected) > 1e-3
    assert_allclose(nijenhuis(src, p, u, v, richardson=True).comps, expected, atol=1e-6)


def test_nijenhuis_step_underflow(cp2: ComplexProjectivePlane) -> None:
    p = AmbientPoint(0, np.zeros(4))
    e = np.eye(4)
    with pytest.raises(NumericalConfigError):
        nijenhuis(cp2, p, _const(e[0]), _const(e[1]), h_fd=0.0)


def test_manifold_is_its_own_structure(s2xs2: AmbientManifold) -> None:
    assert s2xs2.manifold is s2xs2 and s2xs2.integrable
