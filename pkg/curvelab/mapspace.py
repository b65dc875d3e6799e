"""Maps f: S^2 -> M, variations along them and the 2-form they carry.

A map stores, for each domain chart, the chart coordinates of ``f`` at the
nodes in one ambient chart (``charts[c]``). Variations are stored the same
way: ambient chart components at ``f(x)`` in that ambient chart.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from curvelab.ambient import (
    AlmostComplexSource,
    AmbientManifold,
    Array,
    CArray,
    ComplexProjectivePlane,
    SphereProduct,
    pair,
)
from curvelab.domain import (
    SphereGrid,
    SurfaceScalar,
    SurfaceVectorField,
)
from curvelab.exceptions import InvalidInputError, NotImmersedError

logger = logging.getLogger(__name__)

Lift = Callable[[int, CArray], CArray]

MIN_CHART_QUALITY = 1e-6


@dataclass(frozen=True, eq=False)
class SurfaceMap:
    manifold: AmbientManifold
    grid: SphereGrid
    charts: tuple[int, int]
    values: tuple[Array, Array]
    homology_class: str | None = None
    jacobian: tuple[tuple[Array, Array], tuple[Array, Array]] = field(init=False)

    def __post_init__(self) -> None:
        jac = []
        for chart, amb, vals in zip(self.grid.charts, self.charts, self.values):
            self.manifold.check_chart(amb)
            if vals.shape != (chart.size, self.manifold.dim):
                raise InvalidInputError("Map values do not match grid and manifold")
            jac.append((chart.dx @ vals, chart.dy @ vals))
        object.__setattr__(self, "jacobian", (jac[0], jac[1]))

    @classmethod
    def from_lift(
        cls,
        manifold: AmbientManifold,
        grid: SphereGrid,
        lift: Lift,
        charts: tuple[int, int] | None = None,
        homology_class: str | None = None,
    ) -> "SurfaceMap":
        """Build a map from homogeneous lifts, one per domain chart.

        Unless given, each domain chart gets the ambient chart that stays
        farthest from its boundary over all of the chart's nodes.
        """
        chosen, values = [], []
        for c, chart in enumerate(grid.charts):
            homog = lift(c, chart.zeta)
            quality = manifold.homogeneous_quality(homog).min(axis=0)
            amb = int(np.argmax(quality)) if charts is None else charts[c]
            if quality[amb] < MIN_CHART_QUALITY:
                raise InvalidInputError(
                    f"Domain chart {c} is not covered by ambient chart {amb}"
                )
            chosen.append(amb)
            values.append(manifold.from_homogeneous(amb, homog))
        return cls(manifold, grid, (chosen[0], chosen[1]), (values[0], values[1]), homology_class)

    def with_values(self, values: tuple[Array, Array]) -> "SurfaceMap":
        return SurfaceMap(self.manifold, self.grid, self.charts, values, self.homology_class)

    def flat(self) -> Array:
        return self.grid.stack(self.values).ravel()

    def from_flat(self, x: Array) -> "SurfaceMap":
        vals = self.grid.split(x.reshape(-1, self.manifold.dim))
        return self.with_values((vals[0].copy(), vals[1].copy()))

    def omega_matrices(self, c: int) -> Array:
        return self.manifold.omega_matrix(self.charts[c], self.values[c])

    def overlap_agreement(self) -> float:
        worst = 0.0
        for c in (0, 1):
            o = 1 - c
            outer = self.grid.charts[o].outer
            interp = self.grid.overlap[c] @ self.values[c]
            other = self.manifold.transition(self.charts[o], self.charts[c], self.values[o][outer])
            worst = max(worst, float(np.abs(interp - other).max()))
        return worst

    def __repr__(self) -> str:
        return (
            f"<SurfaceMap {self.manifold.name.value} class={self.homology_class} "
            f"charts={self.charts} {self.grid!r}>"
        )


@dataclass(frozen=True, eq=False)
class VariationField:
    f: SurfaceMap
    comps: tuple[Array, Array]

    def __post_init__(self) -> None:
        for vals, base in zip(self.comps, self.f.values):
            if vals.shape != base.shape:
                raise InvalidInputError("Variation does not match its map")

    @classmethod
    def zeros(cls, f: SurfaceMap) -> "VariationField":
        return cls(f, (np.zeros_like(f.values[0]), np.zeros_like(f.values[1])))

    @classmethod
    def from_flat(cls, f: SurfaceMap, x: Array) -> "VariationField":
        vals = f.grid.split(x.reshape(-1, f.manifold.dim))
        return cls(f, (vals[0].copy(), vals[1].copy()))

    def flat(self) -> Array:
        return self.f.grid.stack(self.comps).ravel()

    def __add__(self, other: "VariationField") -> "VariationField":
        _same_map(self.f, other.f)
        return VariationField(self.f, (self.comps[0] + other.comps[0], self.comps[1] + other.comps[1]))

    def __sub__(self, other: "VariationField") -> "VariationField":
        _same_map(self.f, other.f)
        return VariationField(self.f, (self.comps[0] - other.comps[0], self.comps[1] - other.comps[1]))

    def scale(self, k: float) -> "VariationField":
        return VariationField(self.f, (k * self.comps[0], k * self.comps[1]))


@dataclass(frozen=True)
class FormValue:
    value: float
    quad_error_est: float


def _same_map(f: SurfaceMap, g: SurfaceMap) -> None:
    if f.grid is not g.grid or f.charts != g.charts:
        raise InvalidInputError("Variations live on different grids or charts")


def rational_map(
    manifold: ComplexProjectivePlane,
    grid: SphereGrid,
    coeffs: Sequence[Sequence[complex]],
    homology_class: str | None = None,
    charts: tuple[int, int] | None = None,
) -> SurfaceMap:
    """z -> [sum_k c_k z^k] with homogeneous vector coefficients c_k."""
    coef = np.asarray(coeffs, dtype=complex)
    degree = len(coef) - 1

    def lift(c: int, zeta: CArray) -> CArray:
        powers = np.arange(degree + 1) if c == 0 else degree - np.arange(degree + 1)
        return (zeta[:, None] ** powers[None, :]) @ coef

    return SurfaceMap.from_lift(manifold, grid, lift, charts, homology_class)


def line_frame(normal: Sequence[complex], pivot: int | None = None) -> tuple[CArray, CArray]:
    """Two vectors spanning the line {a . Z = 0}, normalized.

    ``pivot`` (default: the largest entry of ``a``) fixes which coordinates
    vanish at z = 0 and z = infinity; keep it fixed to vary lines smoothly.
    """
    a = np.asarray(normal, dtype=complex)
    if np.linalg.norm(a) == 0:
        raise InvalidInputError("A line needs a nonzero normal vector")
    k2 = int(np.argmax(np.abs(a))) if pivot is None else pivot
    k0, k1 = (k for k in range(3) if k != k2)
    p = np.cross(a, np.eye(3)[k1])
    q = np.cross(a, np.eye(3)[k0])
    return p / np.linalg.norm(p), q / np.linalg.norm(q)


def line_map(
    manifold: ComplexProjectivePlane,
    grid: SphereGrid,
    normal: Sequence[complex] = (0, 0, 1),
    pivot: int | None = None,
    charts: tuple[int, int] | None = None,
) -> SurfaceMap:
    p, q = line_frame(normal, pivot)
    return rational_map(manifold, grid, [p, q], "L", charts)


def perturbed_line_map(
    manifold: ComplexProjectivePlane,
    grid: SphereGrid,
    eps: float,
    direction: Sequence[complex] = (0.3, -0.2, 1.0),
    normal: Sequence[complex] = (0, 0, 1),
) -> SurfaceMap:
    """A smooth non-holomorphic deformation of a line, same class."""
    p, q = line_frame(normal)
    e = np.asarray(direction, dtype=complex)

    def lift(c: int, zeta: CArray) -> CArray:
        s = 1.0 + np.abs(zeta) ** 2
        if c == 0:
            bump = zeta.conj() / s
            return p + zeta[:, None] * q + eps * bump[:, None] * e
        bump = zeta**2 / s
        return zeta[:, None] * p + q + eps * bump[:, None] * e

    return SurfaceMap.from_lift(manifold, grid, lift, homology_class="L")


def _factor_lift(zeta: CArray, c: int, kind: str, w0: complex) -> CArray:
    """Homogeneous coordinates of one S^2 factor along a domain chart."""
    ones = np.ones_like(zeta)
    if kind == "const":
        return np.stack([w0 * ones, ones], axis=-1)
    if kind == "const_inverted":
        return np.stack([ones, w0 * ones], axis=-1)
    if kind == "id":
        return np.stack([zeta, ones], axis=-1) if c == 0 else np.stack([ones, zeta], axis=-1)
    # antipodal of the identity: z -> -1/conj(z)
    if c == 0:
        return np.stack([-ones, zeta.conj()], axis=-1)
    return np.stack([-zeta.conj(), ones], axis=-1)


def _product_map(
    manifold: SphereProduct,
    grid: SphereGrid,
    kinds: tuple[str, str],
    w0: complex,
    homology_class: str,
    charts: tuple[int, int] | None = None,
) -> SurfaceMap:
    if not isinstance(manifold, SphereProduct):
        raise InvalidInputError(f"{manifold!r} is not a product of spheres")

    def lift(c: int, zeta: CArray) -> CArray:
        return np.stack([_factor_lift(zeta, c, kind, w0) for kind in kinds], axis=1)

    return SurfaceMap.from_lift(manifold, grid, lift, charts, homology_class)


def sphere_section_map(
    manifold: SphereProduct,
    grid: SphereGrid,
    w0: complex = 0.0,
    horizontal: bool = True,
    inverted: bool = False,
    charts: tuple[int, int] | None = None,
) -> SurfaceMap:
    """z -> (z, w0) (class S2xpt), or (w0, z) when not ``horizontal``.

    With ``inverted`` the constant factor sits at ``1/w0``, so ``w0 = 0`` is
    the point at infinity.
    """
    const = "const_inverted" if inverted else "const"
    if horizontal:
        return _product_map(manifold, grid, ("id", const), w0, "S2xpt", charts)
    return _product_map(manifold, grid, (const, "id"), w0, "ptxS2", charts)


def diagonal_map(manifold: SphereProduct, grid: SphereGrid) -> SurfaceMap:
    return _product_map(manifold, grid, ("id", "id"), 0.0, "diagonal")


def antidiagonal_map(manifold: SphereProduct, grid: SphereGrid) -> SurfaceMap:
    """z -> (z, -1/conj(z)), the class [S2xpt] - [ptxS2]."""
    return _product_map(manifold, grid, ("id", "anti"), 0.0, "antidiagonal")


def constant_map(manifold: AmbientManifold, grid: SphereGrid, chart_id: int, point: Array) -> SurfaceMap:
    point = np.asarray(point, dtype=float)
    values = tuple(np.tile(point, (chart.size, 1)) for chart in grid.charts)
    return SurfaceMap(manifold, grid, (chart_id, chart_id), (values[0], values[1]))


def _pairing(f: SurfaceMap, c: int, forms: Array | None = None) -> Array:
    fx, fy = f.jacobian[c]
    forms = f.omega_matrices(c) if forms is None else forms
    return pair(forms, fx, fy)


def pullback_area(f: SurfaceMap) -> SurfaceScalar:
    return SurfaceScalar(f.grid, (_pairing(f, 0), _pairing(f, 1)))


def _flat_integral(f: SurfaceMap, density: tuple[Array, Array]) -> float:
    return float(sum(np.dot(ch.flat_weights, d) for ch, d in zip(f.grid.charts, density)))


def area(f: SurfaceMap) -> float:
    return _flat_integral(f, pullback_area(f).values)


def homology_coordinates(f: SurfaceMap) -> tuple[float, ...]:
    """Periods of the factor forms: degree in CP^2, bidegree in S^2 x S^2."""
    per_chart = [f.manifold.factor_forms(f.charts[c], f.values[c]) for c in (0, 1)]
    out = []
    for k in range(len(per_chart[0])):
        dens = (_pairing(f, 0, per_chart[0][k]), _pairing(f, 1, per_chart[1][k]))
        out.append(_flat_integral(f, dens))
    return tuple(out)


def homology_class_of(f: SurfaceMap, tol: float = 1e-3) -> str | None:
    coords = homology_coordinates(f)
    rounded = tuple(int(round(x)) for x in coords)
    if max(abs(x - r) for x, r in zip(coords, rounded)) > tol:
        return None
    for info in f.manifold.class_table.values():
        if info.coords == rounded:
            return info.name
    return None


def chern_number(f: SurfaceMap, h_fd: float = 1e-4) -> float:
    """c1 paired with f, from the curvature-trace form of the base metric."""
    dens = tuple(
        _pairing(f, c, f.manifold.ricci_form_matrix(f.charts[c], f.values[c], h_fd))
        for c in (0, 1)
    )
    return _flat_integral(f, (dens[0], dens[1])) / (2 * np.pi)


def is_immersed_symplectic(f: SurfaceMap, rel_tol: float = 1e-8) -> tuple[bool, float]:
    """Rank-2 differential and positive pullback density at every node.

    The chart centres are not nodes; the derivative is interpolated there too.
    """
    samples = []
    for c in (0, 1):
        fx, fy = f.jacobian[c]
        samples.append((f.omega_matrices(c), fx, fy))
        row = f.grid.charts[c].interp_matrix(np.zeros(1))
        centre = f.manifold.omega_matrix(f.charts[c], row @ f.values[c])
        samples.append((centre, row @ fx, row @ fy))
    densities, sigmas = [], []
    for forms, fx, fy in samples:
        densities.append(pair(forms, fx, fy))
        sigmas.append(np.linalg.svd(np.stack([fx, fy], axis=-1), compute_uv=False))
    dens = np.concatenate(densities)
    sig = np.concatenate(sigmas)
    scale = max(float(np.abs(dens).max()), 1e-300)
    min_density = float(dens.min())
    rank_ok = bool(np.all(sig[:, -1] > rel_tol * max(float(sig[:, 0].max()), 1e-300)))
    ok = rank_ok and min_density > rel_tol * scale
    return ok, min_density


def _form_density(f: SurfaceMap, c: int, m1: Array, m2: Array) -> Array:
    """(omega ^ omega)(mu1, mu2, f_x, f_y) at the nodes of chart ``c``."""
    forms = f.omega_matrices(c)
    fx, fy = f.jacobian[c]
    a1, b1 = pair(forms, m1, fx), pair(forms, m1, fy)
    a2, b2 = pair(forms, m2, fx), pair(forms, m2, fy)
    return 2.0 * pair(forms, m1, m2) * pair(forms, fx, fy) - 2.0 * (a1 * b2 - b1 * a2)


def _half_angular(chart_weights: Array, n_angular: int) -> Array:
    w = chart_weights.reshape(-1, n_angular).copy()
    w[:, 1::2] = 0.0
    return 2.0 * w.ravel()


def form_eval(f: SurfaceMap, t1: VariationField, t2: VariationField) -> FormValue:
    _same_map(f, t1.f)
    _same_map(f, t2.f)
    value, coarse = 0.0, 0.0
    for c, chart in enumerate(f.grid.charts):
        dens = _form_density(f, c, t1.comps[c], t2.comps[c])
        value += float(np.dot(chart.flat_weights, dens))
        coarse += float(np.dot(_half_angular(chart.flat_weights, f.grid.n_angular), dens))
    return FormValue(value, abs(value - coarse))


def _stacked(ts: Sequence[VariationField], c: int) -> Array:
    return np.stack([t.comps[c] for t in ts])


def form_gram(f: SurfaceMap, ts: Sequence[VariationField]) -> Array:
    """Antisymmetric matrix of form_eval over a list of variations."""
    k = len(ts)
    gram = np.zeros((k, k))
    iu, ju = np.triu_indices(k, 1)
    for c, chart in enumerate(f.grid.charts):
        forms = f.omega_matrices(c)
        fx, fy = f.jacobian[c]
        mu = _stacked(ts, c)
        a = pair(forms[None], mu, fx[None])
        b = pair(forms[None], mu, fy[None])
        area_density = pair(forms, fx, fy)
        cross = pair(forms[None], mu[iu], mu[ju])
        dens = 2.0 * cross * area_density - 2.0 * (a[iu] * b[ju] - b[iu] * a[ju])
        gram[iu, ju] += dens @ chart.flat_weights
    gram[ju, iu] = -gram[iu, ju]
    return gram


def jtilde(src: AlmostComplexSource, f: SurfaceMap, t: VariationField) -> VariationField:
    _same_map(f, t.f)
    comps = []
    for c in (0, 1):
        j = src.j_matrix(f.charts[c], f.values[c])
        comps.append(np.einsum("nab,nb->na", j, t.comps[c]))
    return VariationField(f, (comps[0], comps[1]))


def metric_gram(src: AlmostComplexSource, f: SurfaceMap, ts: Sequence[VariationField]) -> Array:
    """Symmetrized form_eval(u, J~v): the metric the 2-form and J~ induce."""
    jts = [jtilde(src, f, t) for t in ts]
    k = len(ts)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            out[i, j] = form_eval(f, ts[i], jts[j]).value
    return 0.5 * (out + out.T)


def tangent_variation(f: SurfaceMap, v: SurfaceVectorField) -> VariationField:
    """df(v) for a vector field v d/dz on the domain."""
    if v.grid is not f.grid:
        raise InvalidInputError("Vector field lives on another grid")
    comps = []
    for c in (0, 1):
        fx, fy = f.jacobian[c]
        vals = v.values[c]
        comps.append(vals.real[:, None] * fx + vals.imag[:, None] * fy)
    return VariationField(f, (comps[0], comps[1]))


def split_variation(
    f: SurfaceMap, t: VariationField, rel_tol: float = 1e-10
) -> tuple[VariationField, VariationField]:
    """t = t_tan + t_perp with t_perp symplectically orthogonal to the image."""
    _same_map(f, t.f)
    tan, perp = [], []
    for c in (0, 1):
        forms = f.omega_matrices(c)
        fx, fy = f.jacobian[c]
        s = pair(forms, fx, fy)
        if np.any(np.abs(s) <= rel_tol * max(float(np.abs(s).max()), 1e-300)):
            raise NotImmersedError(f"Pullback area degenerates on domain chart {c}")
        a = pair(forms, t.comps[c], fy) / s
        b = -pair(forms, t.comps[c], fx) / s
        t_tan = a[:, None] * fx + b[:, None] * fy
        tan.append(t_tan)
        perp.append(t.comps[c] - t_tan)
    return VariationField(f, (tan[0], tan[1])), VariationField(f, (perp[0], perp[1]))


def case_two_partner(src: AlmostComplexSource, f: SurfaceMap, t: VariationField) -> VariationField:
    """J~ t_perp: pairs positively with t whenever t is not everywhere tangent."""
    _, perp = split_variation(f, t)
    return jtilde(src, f, perp)


def l2_inner(f: SurfaceMap, t1: VariationField, t2: VariationField) -> float:
    """Base-metric L^2 product against the round area of the domain."""
    total = 0.0
    for c, chart in enumerate(f.grid.charts):
        g = f.manifold.metric_matrix(f.charts[c], f.values[c])
        dens = np.einsum("na,nab,nb->n", t1.comps[c], g, t2.comps[c])
        total += float(np.dot(chart.round_weights, dens))
    return total


def generator_variation(f: SurfaceMap, gen: CArray, coeffs: tuple[Array, Array] | None = None) -> VariationField:
    comps = []
    for c in (0, 1):
        v = f.manifold.linear_vector_field(f.charts[c], f.values[c], gen)
        if coeffs is not None:
            v = coeffs[c][:, None] * v
        comps.append(v)
    return VariationField(f, (comps[0], comps[1]))


def random_variation(
    f: SurfaceMap, rng: np.random.Generator, n_terms: int = 3, degree: int = 2
) -> VariationField:
    """Smooth variation sum_k s_k(x) E_k(f(x)) with E_k linear vector fields."""
    total = VariationField.zeros(f)
    pts = (f.grid.sphere_points(0), f.grid.sphere_points(1))
    for _ in range(n_terms):
        gen = f.manifold.random_generator(rng)
        exps = [e for e in np.ndindex(degree + 1, degree + 1, degree + 1) if sum(e) <= degree]
        coef = rng.normal(size=len(exps))
        scal = tuple(
            sum(k * np.prod(p ** np.asarray(e), axis=-1) for k, e in zip(coef, exps)) for p in pts
        )
        total = total + generator_variation(f, gen, (scal[0], scal[1]))
    return total


def is_simple(f: SurfaceMap, min_separation: float = 0.5, tol: float = 1e-6) -> bool:
    """Injectivity heuristic: distant domain nodes never share an image."""
    pts = np.concatenate([f.grid.sphere_points(c)[f.grid.charts[c].owned] for c in (0, 1)])
    img = np.concatenate(
        [f.manifold.embed(f.charts[c], f.values[c][f.grid.charts[c].owned]) for c in (0, 1)]
    )
    dom = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    dist = np.linalg.norm(img[:, None] - img[None], axis=-1)
    return not bool(np.any((dom > min_separation) & (dist < tol)))


MapFamily = Callable[[Array], SurfaceMap]


def affine_family(f: SurfaceMap, taus: Sequence[VariationField]) -> MapFamily:
    """s -> f + sum s_i tau_i in the map's chart coordinates."""

    def family(s: Array) -> SurfaceMap:
        vals = tuple(
            f.values[c] + sum(si * t.comps[c] for si, t in zip(s, taus)) for c in (0, 1)
        )
        return f.with_values((vals[0], vals[1]))

    return family


def _coordinate_field(family: MapFamily, s: Array, i: int, eps: float) -> tuple[SurfaceMap, VariationField]:
    e = np.zeros(3)
    e[i] = eps
    plus, minus, centre = family(s + e), family(s - e), family(s)
    comps = tuple((plus.values[c] - minus.values[c]) / (2 * eps) for c in (0, 1))
    return centre, VariationField(centre, (comps[0], comps[1]))


def _omega_ij(family: MapFamily, s: Array, i: int, j: int, eps: float) -> float:
    centre, ti = _coordinate_field(family, s, i, eps)
    _, tj = _coordinate_field(family, s, j, eps)
    return form_eval(centre, ti, VariationField(centre, tj.comps)).value


def exterior_derivative_terms(
    family: MapFamily, h: float, eps: float | None = None
) -> tuple[float, float, float]:
    """The three signed terms of dOmega(d1, d2, d3) at the centre of [0, h]^3."""
    if h < 1e-4:
        logger.warning("Cube size %g is small enough for roundoff to dominate", h)
    eps = 0.5 * h if eps is None else eps
    centre = np.full(3, 0.5 * h)

    def d(k: int, i: int, j: int) -> float:
        e = np.zeros(3)
        e[k] = 0.5 * h
        return (_omega_ij(family, centre + e, i, j, eps) - _omega_ij(family, centre - e, i, j, eps)) / h

    return d(0, 1, 2), -d(1, 0, 2), d(2, 0, 1)


def exterior_derivative_check(
    family: MapFamily, h: float, eps: float | None = None
) -> float:
    """dOmega(d1, d2, d3) at the centre of the cube [0, h]^3 by central differences."""
    return sum(exterior_derivative_terms(family, h, eps))


def dump_columns(path: Path, f: SurfaceMap, t: VariationField | None = None) -> None:
    """Write node id, domain chart, ambient chart, coordinates (and components)."""
    rows = []
    node = 0
    for c in (0, 1):
        n = f.grid.charts[c].size
        cols = [np.arange(node, node + n), np.full(n, c), np.full(n, f.charts[c])]
        block = np.column_stack(cols + [f.values[c]] + ([t.comps[c]] if t is not None else []))
        rows.append(block)
        node += n
    dim = f.manifold.dim
    header = ["node", "domain_chart", "ambient_chart"] + [f"x{i}" for i in range(dim)]
    if t is not None:
        header += [f"t{i}" for i in range(dim)]
    fmt = ["%d", "%d", "%d"] + ["%.17g"] * (len(header) - 3)
    np.savetxt(path, np.concatenate(rows), fmt=fmt, header=" ".join(header))


def load_columns(
    path: Path, manifold: AmbientManifold, grid: SphereGrid
) -> tuple[SurfaceMap, VariationField | None]:
    data = np.loadtxt(path, ndmin=2)
    dim = manifold.dim
    if len(data) != grid.n_nodes or data.shape[1] not in (3 + dim, 3 + 2 * dim):
        raise InvalidInputError(f"{path} does not hold a map on {grid!r}")
    n0 = grid.charts[0].size
    blocks = (data[:n0], data[n0:])
    charts = (int(blocks[0][0, 2]), int(blocks[1][0, 2]))
    f = SurfaceMap(manifold, grid, charts, (blocks[0][:, 3 : 3 + dim], blocks[1][:, 3 : 3 + dim]))
    if data.shape[1] == 3 + dim:
        return f, None
    return f, VariationField(f, (blocks[0][:, 3 + dim :], blocks[1][:, 3 + dim :]))
