"""Target manifolds (M, omega) with compatible almost complex structures.

All chart coordinates are real and interleaved: ``(x1, y1, x2, y2)`` for the
complex coordinates ``(z1, z2)``. Batched evaluators take ``coords`` of shape
``(N, 2n)`` and return arrays with a leading ``N`` axis.
"""

import abc
import enum
import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from numpy.typing import NDArray

from curvelab.exceptions import (
    DecompositionError,
    InvalidInputError,
    NumericalConfigError,
    PathOutOfRangeError,
    UnknownClassError,
)

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
CArray = NDArray[np.complex128]
VectorFieldFn = Callable[[Array], Array]

DEFAULT_FD_STEP = 1e-4


class ManifoldName(enum.Enum):
    CP2 = "CP2"
    S2xS2 = "S2xS2"


@dataclass(frozen=True)
class ClassInfo:
    name: str
    c1: int
    self_int: int
    area: float
    coords: tuple[int, ...]


@dataclass(frozen=True)
class AmbientPoint:
    chart_id: int
    coords: Array

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 1 or not np.all(np.isfinite(coords)):
            raise InvalidInputError(f"Bad point coordinates: {self.coords!r}")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class AmbientVector:
    base: AmbientPoint
    comps: Array

    def __post_init__(self) -> None:
        comps = np.asarray(self.comps, dtype=float)
        if comps.shape != self.base.coords.shape:
            raise InvalidInputError(
                f"Vector of length {comps.shape} does not fit point of "
                f"dimension {self.base.coords.shape}"
            )
        object.__setattr__(self, "comps", comps)


def complex_coords(coords: Array) -> CArray:
    return coords[..., 0::2] + 1j * coords[..., 1::2]


def real_coords(zeta: CArray) -> Array:
    out = np.empty(zeta.shape[:-1] + (2 * zeta.shape[-1],))
    out[..., 0::2] = zeta.real
    out[..., 1::2] = zeta.imag
    return out


def _real_basis(n: int) -> CArray:
    """Rows are the real basis vectors d/dx_a, d/dy_a as complex vectors."""
    basis = np.zeros((2 * n, n), dtype=complex)
    for a in range(n):
        basis[2 * a, a] = 1.0
        basis[2 * a + 1, a] = 1j
    return basis


def hermitian_to_real(h: CArray) -> tuple[Array, Array]:
    """Split a hermitian form into its (metric, symplectic) real matrices.

    With ``H(U, V) = sum h_ab U_a conj(V_b)`` the metric is ``Re H`` and the
    2-form ``(i/2) sum h_ab dz_a ^ dzbar_b`` is ``-Im H``.
    """
    basis = _real_basis(h.shape[-1])
    full = np.einsum("ka,nab,lb->nkl", basis, h, basis.conj())
    return full.real.copy(), -full.imag.copy()


def complex_to_real_linear(c: CArray) -> Array:
    """Real matrix of a complex-linear map in interleaved coordinates."""
    n_rows, n_cols = c.shape[-2:]
    out = np.zeros(c.shape[:-2] + (2 * n_rows, 2 * n_cols))
    out[..., 0::2, 0::2] = c.real
    out[..., 0::2, 1::2] = -c.imag
    out[..., 1::2, 0::2] = c.imag
    out[..., 1::2, 1::2] = c.real
    return out


def standard_j(n: int) -> Array:
    j = np.zeros((2 * n, 2 * n))
    for a in range(n):
        j[2 * a + 1, 2 * a] = 1.0
        j[2 * a, 2 * a + 1] = -1.0
    return j


def pair(omega_mats: Array, u: Array, v: Array) -> Array:
    """Evaluate antisymmetric forms on vector pairs, exactly antisymmetric.

    Only the upper triangle is read, so swapping ``u`` and ``v`` negates every
    summand bit for bit.
    """
    k = u.shape[-1]
    iu, ju = np.triu_indices(k, 1)
    terms = omega_mats[..., iu, ju] * (u[..., iu] * v[..., ju] - u[..., ju] * v[..., iu])
    return terms.sum(axis=-1)


def smooth_step(t: Array) -> Array:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


class AlmostComplexSource(Protocol):
    """Anything that supplies J at chart points: a manifold or a J_lambda."""

    @property
    def manifold(self) -> "AmbientManifold": ...

    @property
    def integrable(self) -> bool: ...

    def j_matrix(self, chart_id: int, coords: Array) -> Array: ...


class AmbientManifold(abc.ABC):
    name: ManifoldName
    dim_half: int
    n_charts: int
    lam: float

    def __init__(self) -> None:
        self.class_table: dict[str, ClassInfo] = {}

    @property
    def manifold(self) -> "AmbientManifold":
        return self

    @property
    def integrable(self) -> bool:
        return True

    @property
    def dim(self) -> int:
        return 2 * self.dim_half

    def check_chart(self, chart_id: int) -> None:
        if not 0 <= chart_id < self.n_charts:
            raise InvalidInputError(f"{self.name.value} has no chart {chart_id}")

    def _coords(self, coords: Array) -> Array:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[-1] != self.dim:
            raise InvalidInputError(
                f"Expected {self.dim} chart coordinates, got {coords.shape[-1]}"
            )
        return coords

    @abc.abstractmethod
    def hermitian(self, chart_id: int, coords: Array) -> CArray:
        """Kähler metric coefficients h_{a bbar} in the chart."""

    @abc.abstractmethod
    def to_homogeneous(self, chart_id: int, coords: Array) -> CArray: ...

    @abc.abstractmethod
    def from_homogeneous(self, chart_id: int, homog: CArray) -> Array: ...

    @abc.abstractmethod
    def homogeneous_quality(self, homog: CArray) -> Array:
        """(N, n_charts) distance from each chart's boundary, in [0, 1]."""

    @abc.abstractmethod
    def transition_complex_jacobian(
        self, src: int, dst: int, coords: Array
    ) -> CArray: ...

    @abc.abstractmethod
    def linear_vector_field(self, chart_id: int, coords: Array, gen: CArray) -> Array:
        """Infinitesimal action of a linear generator on homogeneous coordinates."""

    @abc.abstractmethod
    def factor_forms(self, chart_id: int, coords: Array) -> list[Array]:
        """Closed 2-forms whose periods give the integer homology coordinates."""

    @abc.abstractmethod
    def embed(self, chart_id: int, coords: Array) -> Array:
        """Chart-independent real embedding used to compare points."""

    @abc.abstractmethod
    def random_generator(self, rng: np.random.Generator) -> CArray: ...

    def metric_matrix(self, chart_id: int, coords: Array) -> Array:
        self.check_chart(chart_id)
        g, _ = hermitian_to_real(self.hermitian(chart_id, self._coords(coords)))
        return g

    def omega_matrix(self, chart_id: int, coords: Array) -> Array:
        self.check_chart(chart_id)
        _, w = hermitian_to_real(self.hermitian(chart_id, self._coords(coords)))
        return w

    def j_matrix(self, chart_id: int, coords: Array) -> Array:
        self.check_chart(chart_id)
        coords = self._coords(coords)
        return np.broadcast_to(standard_j(self.dim_half), (len(coords), self.dim, self.dim)).copy()

    def transition(self, src: int, dst: int, coords: Array) -> Array:
        self.check_chart(src)
        self.check_chart(dst)
        coords = self._coords(coords)
        if src == dst:
            return coords.copy()
        return self.from_homogeneous(dst, self.to_homogeneous(src, coords))

    def transition_jacobian(self, src: int, dst: int, coords: Array) -> Array:
        coords = self._coords(coords)
        if src == dst:
            return np.broadcast_to(np.eye(self.dim), (len(coords), self.dim, self.dim)).copy()
        return complex_to_real_linear(self.transition_complex_jacobian(src, dst, coords))

    def chart_quality(self, chart_id: int, coords: Array) -> Array:
        return self.homogeneous_quality(self.to_homogeneous(chart_id, self._coords(coords)))

    def best_chart(self, homog: CArray) -> int:
        quality = self.homogeneous_quality(homog)
        return int(np.argmax(quality.min(axis=0)))

    def ricci_potential(self, chart_id: int, coords: Array) -> Array:
        """-log det h up to a chart constant (= -1/2 log det g)."""
        g = self.metric_matrix(chart_id, coords)
        _, logdet = np.linalg.slogdet(g)
        return -0.5 * logdet

    def ricci_form_matrix(
        self, chart_id: int, coords: Array, h_fd: float = DEFAULT_FD_STEP
    ) -> Array:
        """Curvature-trace 2-form i dd-bar(-log det h) of the base Kähler metric."""
        coords = self._coords(coords)
        k = self.dim
        hess = np.zeros((len(coords), k, k))
        eye = np.eye(k) * h_fd
        for i in range(k):
            for j in range(i, k):
                val = (
                    self.ricci_potential(chart_id, coords + eye[i] + eye[j])
                    - self.ricci_potential(chart_id, coords + eye[i] - eye[j])
                    - self.ricci_potential(chart_id, coords - eye[i] + eye[j])
                    + self.ricci_potential(chart_id, coords - eye[i] - eye[j])
                ) / (4 * h_fd**2)
                hess[:, i, j] = val
                hess[:, j, i] = val
        n = self.dim_half
        psi = np.zeros((len(coords), n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                xa, ya, xb, yb = 2 * a, 2 * a + 1, 2 * b, 2 * b + 1
                psi[:, a, b] = 0.25 * (
                    hess[:, xa, xb]
                    + hess[:, ya, yb]
                    + 1j * (hess[:, xa, yb] - hess[:, ya, xb])
                )
        _, rho = hermitian_to_real(psi)
        return 2.0 * rho

    def lookup_class(self, name: str) -> ClassInfo:
        try:
            return self.class_table[name]
        except KeyError:
            raise UnknownClassError(name) from None

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name.value} lam={self.lam:g}>"


class ComplexProjectivePlane(AmbientManifold):
    """CP^2 with Fubini-Study normalized so a line has area 1."""

    name = ManifoldName.CP2
    dim_half = 2
    n_charts = 3
    lam = 0.0
    OTHERS = ((1, 2), (0, 2), (0, 1))

    def __init__(self) -> None:
        super().__init__()
        for info in (
            ClassInfo("L", 3, 1, 1.0, (1,)),
            ClassInfo("2L", 6, 4, 2.0, (2,)),
            ClassInfo("3L", 9, 9, 3.0, (3,)),
        ):
            self.class_table[info.name] = info

    def hermitian(self, chart_id: int, coords: Array) -> CArray:
        zeta = complex_coords(coords)
        s = 1.0 + np.sum(np.abs(zeta) ** 2, axis=-1)
        outer = np.einsum("na,nb->nab", zeta.conj(), zeta)
        h = np.eye(2)[None] * s[:, None, None] - outer
        return h / (s[:, None, None] ** 2) / np.pi

    def to_homogeneous(self, chart_id: int, coords: Array) -> CArray:
        zeta = complex_coords(self._coords(coords))
        homog = np.ones((len(zeta), 3), dtype=complex)
        homog[:, list(self.OTHERS[chart_id])] = zeta
        return homog

    def from_homogeneous(self, chart_id: int, homog: CArray) -> Array:
        with np.errstate(divide="ignore", invalid="ignore"):
            zeta = homog[:, list(self.OTHERS[chart_id])] / homog[:, chart_id : chart_id + 1]
        return real_coords(zeta)

    def homogeneous_quality(self, homog: CArray) -> Array:
        return np.abs(homog) / np.linalg.norm(homog, axis=-1, keepdims=True)

    def transition_complex_jacobian(self, src: int, dst: int, coords: Array) -> CArray:
        homog = self.to_homogeneous(src, coords)
        z_m = homog[:, dst]
        jac = np.zeros((len(homog), 2, 2), dtype=complex)
        for i, b in enumerate(self.OTHERS[dst]):
            for j, o in enumerate(self.OTHERS[src]):
                num = (b == o) * z_m - homog[:, b] * (dst == o)
                jac[:, i, j] = num / z_m**2
        return jac

    def linear_vector_field(self, chart_id: int, coords: Array, gen: CArray) -> Array:
        homog = self.to_homogeneous(chart_id, coords)
        vel = homog @ np.asarray(gen).T
        z_k = homog[:, chart_id : chart_id + 1]
        idx = list(self.OTHERS[chart_id])
        dzeta = (vel[:, idx] * z_k - homog[:, idx] * vel[:, chart_id : chart_id + 1]) / z_k**2
        return real_coords(dzeta)

    def factor_forms(self, chart_id: int, coords: Array) -> list[Array]:
        return [self.omega_matrix(chart_id, coords)]

    def embed(self, chart_id: int, coords: Array) -> Array:
        homog = self.to_homogeneous(chart_id, coords)
        homog = homog / np.linalg.norm(homog, axis=-1, keepdims=True)
        proj = np.einsum("na,nb->nab", homog, homog.conj()).reshape(len(homog), -1)
        return np.concatenate([proj.real, proj.imag], axis=-1)

    def random_generator(self, rng: np.random.Generator) -> CArray:
        return rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))


class SphereProduct(AmbientManifold):
    """S^2 x S^2 with (1 + lam) tau + tau, each tau of total area 1.

    Chart ``2*a1 + a2`` uses stereographic chart ``a1`` on the first factor and
    ``a2`` on the second; factor chart 0 is ``u = Z0/Z1``, chart 1 is ``Z1/Z0``.
    """

    name = ManifoldName.S2xS2
    dim_half = 2
    n_charts = 4

    def __init__(self, lam: float = 0.0) -> None:
        super().__init__()
        if lam < 0:
            raise InvalidInputError(f"Area asymmetry must be >= 0, got {lam}")
        self.lam = float(lam)
        for info in (
            ClassInfo("S2xpt", 2, 0, 1.0 + self.lam, (1, 0)),
            ClassInfo("ptxS2", 2, 0, 1.0, (0, 1)),
            ClassInfo("diagonal", 4, 2, 2.0 + self.lam, (1, 1)),
            ClassInfo("antidiagonal", 0, -2, self.lam, (1, -1)),
        ):
            self.class_table[info.name] = info

    @staticmethod
    def factor_charts(chart_id: int) -> tuple[int, int]:
        return chart_id // 2, chart_id % 2

    def hermitian(self, chart_id: int, coords: Array) -> CArray:
        zeta = complex_coords(coords)
        s = 1.0 + np.abs(zeta) ** 2
        h = np.zeros((len(zeta), 2, 2), dtype=complex)
        h[:, 0, 0] = (1.0 + self.lam) / s[:, 0] ** 2
        h[:, 1, 1] = 1.0 / s[:, 1] ** 2
        return h / np.pi

    def to_homogeneous(self, chart_id: int, coords: Array) -> CArray:
        zeta = complex_coords(self._coords(coords))
        homog = np.ones((len(zeta), 2, 2), dtype=complex)
        for i, a in enumerate(self.factor_charts(chart_id)):
            homog[:, i, a] = zeta[:, i]
        return homog

    def from_homogeneous(self, chart_id: int, homog: CArray) -> Array:
        zeta = np.empty((len(homog), 2), dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for i, a in enumerate(self.factor_charts(chart_id)):
                zeta[:, i] = homog[:, i, a] / homog[:, i, 1 - a]
        return real_coords(zeta)

    def homogeneous_quality(self, homog: CArray) -> Array:
        q = np.abs(homog) / np.linalg.norm(homog, axis=-1, keepdims=True)
        out = np.empty((len(homog), 4))
        for chart_id in range(4):
            a1, a2 = self.factor_charts(chart_id)
            out[:, chart_id] = np.minimum(q[:, 0, 1 - a1], q[:, 1, 1 - a2])
        return out

    def transition_complex_jacobian(self, src: int, dst: int, coords: Array) -> CArray:
        zeta = complex_coords(self._coords(coords))
        jac = np.zeros((len(zeta), 2, 2), dtype=complex)
        for i, (a, b) in enumerate(zip(self.factor_charts(src), self.factor_charts(dst))):
            jac[:, i, i] = 1.0 if a == b else -1.0 / zeta[:, i] ** 2
        return jac

    def linear_vector_field(self, chart_id: int, coords: Array, gen: CArray) -> Array:
        homog = self.to_homogeneous(chart_id, coords)
        gen = np.asarray(gen)
        dzeta = np.empty((len(homog), 2), dtype=complex)
        for i, a in enumerate(self.factor_charts(chart_id)):
            vel = homog[:, i] @ gen[i].T
            top, bottom = homog[:, i, a], homog[:, i, 1 - a]
            dzeta[:, i] = (vel[:, a] * bottom - top * vel[:, 1 - a]) / bottom**2
        return real_coords(dzeta)

    def factor_forms(self, chart_id: int, coords: Array) -> list[Array]:
        zeta = complex_coords(self._coords(coords))
        forms = []
        for i in range(2):
            h = np.zeros((len(zeta), 2, 2), dtype=complex)
            h[:, i, i] = 1.0 / (np.pi * (1.0 + np.abs(zeta[:, i]) ** 2) ** 2)
            forms.append(hermitian_to_real(h)[1])
        return forms

    def embed(self, chart_id: int, coords: Array) -> Array:
        homog = self.to_homogeneous(chart_id, coords)
        out = []
        for i in range(2):
            z0, z1 = homog[:, i, 0], homog[:, i, 1]
            norm = np.abs(z0) ** 2 + np.abs(z1) ** 2
            cross = 2 * z0 * z1.conj() / norm
            out += [cross.real, cross.imag, (np.abs(z0) ** 2 - np.abs(z1) ** 2) / norm]
        return np.stack(out, axis=-1)

    def random_generator(self, rng: np.random.Generator) -> CArray:
        return rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))


def build_manifold(name: ManifoldName | str, lam: float = 0.0) -> AmbientManifold:
    name = ManifoldName(name)
    if name is ManifoldName.CP2:
        return ComplexProjectivePlane()
    return SphereProduct(lam)


def _single(m: AmbientManifold, p: AmbientPoint, *vectors: AmbientVector) -> Array:
    m.check_chart(p.chart_id)
    if p.coords.shape != (m.dim,):
        raise InvalidInputError(f"Point has {p.coords.shape} coordinates, need {m.dim}")
    for v in vectors:
        if v.base.chart_id != p.chart_id or not np.array_equal(v.base.coords, p.coords):
            raise InvalidInputError("Vector is not based at the given point")
    return p.coords[None]


def omega(m: AmbientManifold, p: AmbientPoint, u: AmbientVector, v: AmbientVector) -> float:
    coords = _single(m, p, u, v)
    return float(pair(m.omega_matrix(p.chart_id, coords), u.comps[None], v.comps[None])[0])


def j_apply(
    m: AlmostComplexSource, p: AmbientPoint, u: AmbientVector
) -> AmbientVector:
    coords = _single(m.manifold, p, u)
    return AmbientVector(p, m.j_matrix(p.chart_id, coords)[0] @ u.comps)


def _check_polar_inputs(omega_mats: Array, g_mats: Array, tol: float = 1e-10) -> None:
    scale = np.abs(omega_mats).max() or 1.0
    if np.abs(omega_mats + np.swapaxes(omega_mats, -1, -2)).max() > tol * scale:
        raise DecompositionError("omega is not antisymmetric")
    if np.abs(g_mats - np.swapaxes(g_mats, -1, -2)).max() > tol * (np.abs(g_mats).max() or 1.0):
        raise DecompositionError("g is not symmetric")


def polar_compatible_batch(omega_mats: Array, g_mats: Array) -> Array:
    """Canonical compatible J = (A A*)^(-1/2) A with omega(u, v) = g(Au, v)."""
    try:
        chol = np.linalg.cholesky(g_mats)
    except np.linalg.LinAlgError as e:
        raise DecompositionError("g is not positive definite") from e
    # In g-orthonormal coordinates A becomes -L^-1 omega L^-T, adjoint = transpose.
    tmp = np.linalg.solve(chol, omega_mats)
    a_tilde = -np.linalg.solve(chol, np.swapaxes(tmp, -1, -2))
    a_tilde = np.swapaxes(a_tilde, -1, -2)
    u, s, vt = np.linalg.svd(a_tilde)
    if np.any(s[..., -1] <= 1e-13 * s[..., 0]):
        raise DecompositionError("omega is degenerate")
    orth = u @ vt
    chol_t = np.swapaxes(chol, -1, -2)
    return np.linalg.solve(chol_t, orth @ chol_t)


def polar_compatible_J(omega_mat: Array, g_mat: Array) -> Array:
    omega_mat = np.asarray(omega_mat, dtype=float)
    g_mat = np.asarray(g_mat, dtype=float)
    if omega_mat.ndim != 2 or omega_mat.shape != g_mat.shape or omega_mat.shape[0] % 2:
        raise InvalidInputError("omega and g must be square matrices of equal even size")
    _check_polar_inputs(omega_mat, g_mat)
    return polar_compatible_batch(omega_mat[None], g_mat[None])[0]


@dataclass(frozen=True)
class Perturbation:
    """Symmetric bilinear field: Gaussian bump times a constant matrix.

    The profile is cut off smoothly between ``0.75 * cutoff`` and ``cutoff``
    (in units of ``radius``), so the support is compact.
    """

    chart_id: int
    center: tuple[float, ...]
    radius: float
    matrix: tuple[tuple[float, ...], ...]
    cutoff: float = 8.0

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (len(self.center), len(self.center)):
            raise InvalidInputError("Perturbation matrix does not match its center")
        if not np.allclose(mat, mat.T):
            raise InvalidInputError("Perturbation matrix must be symmetric")
        if self.radius <= 0:
            raise InvalidInputError("Perturbation radius must be positive")

    def profile(self, local: Array) -> Array:
        dist = np.linalg.norm(local - np.asarray(self.center), axis=-1) / self.radius
        cut = smooth_step((self.cutoff - dist) / (0.25 * self.cutoff))
        out = np.exp(-0.5 * dist**2) * cut
        return np.where(np.isfinite(out), out, 0.0)

    def bilinear(self, m: AmbientManifold, chart_id: int, coords: Array) -> Array:
        coords = m._coords(coords)
        with np.errstate(all="ignore"):
            local = m.transition(chart_id, self.chart_id, coords)
            jac = m.transition_jacobian(chart_id, self.chart_id, coords)
            prof = self.profile(local)
        inside = prof > 0
        out = np.zeros((len(coords), m.dim, m.dim))
        if np.any(inside):
            mat = np.asarray(self.matrix, dtype=float)
            t = jac[inside]
            out[inside] = prof[inside, None, None] * (np.swapaxes(t, -1, -2) @ mat @ t)
        return out

    @classmethod
    def empty(cls, dim: int) -> "Perturbation":
        return cls(0, (0.0,) * dim, 1.0, tuple((0.0,) * dim for _ in range(dim)))


@dataclass(frozen=True)
class StructurePath:
    """J_lam = polar(omega, g + lam * h), a path of compatible structures."""

    base: AmbientManifold
    perturbation: Perturbation

    def at(self, lam: float) -> "PathStructure":
        if not 0.0 <= lam <= 1.0:
            raise InvalidInputError(f"lam must lie in [0, 1], got {lam}")
        return PathStructure(self, float(lam))


@dataclass(frozen=True)
class PathStructure:
    path: StructurePath
    lam: float

    @property
    def manifold(self) -> AmbientManifold:
        return self.path.base

    @property
    def integrable(self) -> bool:
        return self.lam == 0.0

    def j_matrix(self, chart_id: int, coords: Array) -> Array:
        m = self.path.base
        coords = m._coords(coords)
        base_j = m.j_matrix(chart_id, coords)
        if self.lam == 0.0:
            return base_j
        h = self.path.perturbation.bilinear(m, chart_id, coords)
        touched = np.any(h != 0.0, axis=(-1, -2))
        if not np.any(touched):
            return base_j
        g = m.metric_matrix(chart_id, coords[touched]) + self.lam * h[touched]
        min_eig = np.linalg.eigvalsh(g)[:, 0].min()
        if min_eig <= 0:
            raise PathOutOfRangeError(self.lam, float(min_eig))
        w = m.omega_matrix(chart_id, coords[touched])
        base_j[touched] = polar_compatible_batch(w, g)
        return base_j

    def __repr__(self) -> str:
        return f"<PathStructure {self.path.base.name.value} lam={self.lam:g}>"


def path_J(sp: StructurePath, lam: float, p: AmbientPoint) -> Array:
    coords = _single(sp.base, p)
    return sp.at(lam).j_matrix(p.chart_id, coords)[0]


def _lie_bracket(
    x: VectorFieldFn, y: VectorFieldFn, p: Array, h_fd: float
) -> Array:
    xp, yp = x(p), y(p)
    dy_x = (y(p + h_fd * xp) - y(p - h_fd * xp)) / (2 * h_fd)
    dx_y = (x(p + h_fd * yp) - x(p - h_fd * yp)) / (2 * h_fd)
    return dy_x - dx_y


def _nijenhuis_once(
    src: AlmostComplexSource,
    chart_id: int,
    p: Array,
    u: VectorFieldFn,
    v: VectorFieldFn,
    h_fd: float,
) -> Array:
    def j_at(q: Array) -> Array:
        return src.j_matrix(chart_id, q[None])[0]

    def ju(q: Array) -> Array:
        return j_at(q) @ u(q)

    def jv(q: Array) -> Array:
        return j_at(q) @ v(q)

    jp = j_at(p)
    return (
        _lie_bracket(ju, jv, p, h_fd)
        - jp @ _lie_bracket(ju, v, p, h_fd)
        - jp @ _lie_bracket(u, jv, p, h_fd)
        - _lie_bracket(u, v, p, h_fd)
    )


def nijenhuis(
    src: AlmostComplexSource,
    p: AmbientPoint,
    u: VectorFieldFn,
    v: VectorFieldFn,
    h_fd: float = DEFAULT_FD_STEP,
    richardson: bool = False,
) -> AmbientVector:
    """N_J(U, V) = [JU, JV] - J[JU, V] - J[U, JV] - [U, V] by central differences."""
    coords = _single(src.manifold, p)[0]
    scale = max(1.0, float(np.abs(coords).max()))
    if not h_fd > 0 or h_fd < 1e-12 * scale:
        raise NumericalConfigError(f"Finite-difference step {h_fd!r} underflows")
    value = _nijenhuis_once(src, p.chart_id, coords, u, v, h_fd)
    if richardson:
        half = _nijenhuis_once(src, p.chart_id, coords, u, v, h_fd / 2)
        value = (4 * half - value) / 3
    return AmbientVector(p, value)


def directional_j(
    src: AlmostComplexSource, chart_id: int, coords: Array, w: Array, h_fd: float
) -> Array:
    """Batched central difference of J along the vectors ``w``."""
    return (
        src.j_matrix(chart_id, coords + h_fd * w) - src.j_matrix(chart_id, coords - h_fd * w)
    ) / (2 * h_fd)


def nijenhuis_pointwise(
    src: AlmostComplexSource,
    chart_id: int,
    coords: Array,
    x: Array,
    y: Array,
    h_fd: float = DEFAULT_FD_STEP,
) -> Array:
    """N_J on vectors extended as constant fields, at many points at once."""
    j = src.j_matrix(chart_id, coords)
    jx = np.einsum("nab,nb->na", j, x)
    jy = np.einsum("nab,nb->na", j, y)

    def d(w: Array) -> Array:
        return directional_j(src, chart_id, coords, w, h_fd)

    return (
        np.einsum("nab,nb->na", d(jx), y)
        - np.einsum("nab,nb->na", d(jy), x)
        + np.einsum("nab,nbc,nc->na", j, d(y), x)
        - np.einsum("nab,nbc,nc->na", j, d(x), y)
    )
