"""The Cauchy-Riemann operator, its linearization and a Gauss-Newton solver.

Residual convention: only the ``d/dx`` slot of the (0,1)-form is stored,
``r = 1/2 (f_x + J f_y)``; the ``d/dy`` slot is ``J r``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from curvelab.ambient import AlmostComplexSource, Array, directional_j, nijenhuis_pointwise
from curvelab.exceptions import (
    InvalidInputError,
    NoConvergenceError,
    NonRegularPointError,
    NotAtZeroError,
    UnknownClassError,
)
from curvelab.mapspace import SurfaceMap, VariationField, homology_coordinates, jtilde

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_iter: int = 25
    fd_step: float = 1e-5
    damping: float = 0.0
    overlap_weight: float = 1.0
    frozen_jacobian: bool = False
    gap_small: float = 1e-3
    min_gap: float = 1e4
    index_gap: float = 10.0
    expected_kernel: int | None = None


@dataclass(frozen=True, eq=False)
class DbarResidual:
    values: tuple[Array, Array]
    l2_norm: float


@dataclass(frozen=True, eq=False)
class SolveResult:
    f: SurfaceMap
    iterations: int
    residual: float
    stopped_by: str
    regular: bool = True


@dataclass(frozen=True, eq=False)
class VerticalOperator:
    f: SurfaceMap
    matrix: Array
    dbar_rows: Array
    singular_values: Array
    right_vectors: Array
    fd_step: float
    kernel_dim: int | None
    kernel_ratio: float = 0.0

    def apply(self, t: VariationField) -> tuple[Array, Array]:
        """D t as per-node residual variations (unweighted)."""
        out = (self.dbar_rows @ t.flat()).reshape(-1, self.f.manifold.dim)
        vals = self.f.grid.split(out)
        return vals[0], vals[1]

    def kernel(self) -> list[VariationField]:
        if self.kernel_dim is None:
            raise NonRegularPointError("No singular-value gap separates the kernel")
        rows = self.right_vectors[len(self.right_vectors) - self.kernel_dim :]
        return [VariationField.from_flat(self.f, v) for v in rows]


def _widest_gap(sigmas: Array, small: float) -> tuple[int, float] | None:
    first_small = int(np.searchsorted(-sigmas, -small * sigmas[0], side="right"))
    if first_small >= len(sigmas):
        return None
    lo = max(first_small - 1, 0)
    upper = sigmas[lo:-1]
    lower = np.maximum(sigmas[lo + 1 :], np.finfo(float).tiny)
    ratios = upper / lower
    best = int(np.argmax(ratios))
    return len(sigmas) - (lo + best + 1), float(ratios[best])


def kernel_gap(
    sigmas: Array,
    small: float = 1e-3,
    min_gap: float = 1e4,
    expected: int | None = None,
    index_gap: float = 10.0,
) -> tuple[int, float] | None:
    """Kernel dimension and the singular-value ratio that separates it.

    The widest ratio gap among the small singular values wins when it reaches
    ``min_gap``. Otherwise, with ``expected`` given, the kernel is the trailing
    ``expected`` values provided they are all small and the ratio at that cut
    reaches ``index_gap``.
    """
    sigmas = np.sort(np.asarray(sigmas))[::-1]
    if len(sigmas) == 0 or sigmas[0] == 0.0:
        return None
    widest = _widest_gap(sigmas, small)
    if widest is not None and widest[1] >= min_gap:
        return widest
    if expected is None or not 0 < expected < len(sigmas):
        return None
    cut = len(sigmas) - expected
    if sigmas[cut] > small * sigmas[0]:
        return None
    ratio = float(sigmas[cut - 1] / max(sigmas[cut], np.finfo(float).tiny))
    if ratio < index_gap:
        return None
    return expected, ratio


def index_kernel_dim(f: SurfaceMap) -> int | None:
    """Real index 2 c1 + 4 of the linearization at a sphere in the map's class."""
    if f.homology_class is None:
        return None
    try:
        info = f.manifold.lookup_class(f.homology_class)
    except UnknownClassError:
        return None
    return 2 * info.c1 + 4


def _residual_values(f: SurfaceMap, src: AlmostComplexSource) -> tuple[Array, Array]:
    out = []
    for c in (0, 1):
        fx, fy = f.jacobian[c]
        j = src.j_matrix(f.charts[c], f.values[c])
        out.append(0.5 * (fx + np.einsum("nab,nb->na", j, fy)))
    return out[0], out[1]


def _l2(f: SurfaceMap, values: tuple[Array, Array]) -> float:
    """Conformally invariant norm of a (0,1)-form from its d/dx slot."""
    total = 0.0
    for c, chart in enumerate(f.grid.charts):
        g = f.manifold.metric_matrix(f.charts[c], f.values[c])
        dens = np.einsum("na,nab,nb->n", values[c], g, values[c])
        total += float(np.dot(chart.flat_weights, dens))
    return float(np.sqrt(2.0 * max(total, 0.0)))


def dbar(f: SurfaceMap, src: AlmostComplexSource) -> DbarResidual:
    if src.manifold is not f.manifold:
        raise InvalidInputError("Structure and map live on different manifolds")
    values = _residual_values(f, src)
    return DbarResidual(values, _l2(f, values))


def _overlap_scale(f: SurfaceMap, opts: SolveOptions) -> float:
    mean_w = np.mean(np.concatenate([ch.colloc_weights for ch in f.grid.charts]))
    return float(np.sqrt(mean_w * opts.overlap_weight))


def residual_vector(f: SurfaceMap, src: AlmostComplexSource, opts: SolveOptions) -> Array:
    """Weighted least-squares residual: dbar rows, then overlap agreement rows."""
    parts = []
    for c, r in enumerate(_residual_values(f, src)):
        parts.append((np.sqrt(f.grid.charts[c].colloc_weights)[:, None] * r).ravel())
    scale = _overlap_scale(f, opts)
    m = f.manifold
    for c in (0, 1):
        o = 1 - c
        outer = f.grid.charts[o].outer
        diff = f.grid.overlap[c] @ f.values[c] - m.transition(f.charts[o], f.charts[c], f.values[o][outer])
        parts.append(scale * diff.ravel())
    return np.concatenate(parts)


def _dbar_jacobian(f: SurfaceMap, src: AlmostComplexSource, c: int, h: float) -> Array:
    chart = f.grid.charts[c]
    k = f.manifold.dim
    n = chart.size
    x = f.values[c]
    fy = f.jacobian[c][1]
    j = src.j_matrix(f.charts[c], x)
    jac = 0.5 * np.kron(chart.dx, np.eye(k))
    jac += 0.5 * np.einsum("ik,iab->iakb", chart.dy, j).reshape(n * k, n * k)
    # J varies with the node value itself
    local = np.zeros((n, k, k))
    for b in range(k):
        e = np.zeros((n, k))
        e[:, b] = 1.0
        local[:, :, b] = 0.5 * np.einsum("nab,nb->na", directional_j(src, f.charts[c], x, e, h), fy)
    idx = np.arange(n)
    blocks = jac.reshape(n, k, n, k)
    blocks[idx, :, idx, :] += local
    return blocks.reshape(n * k, n * k)


def _assemble(
    f: SurfaceMap, src: AlmostComplexSource, opts: SolveOptions
) -> tuple[Array, Array]:
    """Weighted Jacobian of ``residual_vector`` and the raw dbar block."""
    k = f.manifold.dim
    sizes = [ch.size * k for ch in f.grid.charts]
    n_cols = sum(sizes)
    offs = (0, sizes[0])
    raw = np.zeros((n_cols, n_cols))
    for c in (0, 1):
        sl = slice(offs[c], offs[c] + sizes[c])
        raw[sl, sl] = _dbar_jacobian(f, src, c, opts.fd_step)
    weights = np.concatenate(
        [np.repeat(np.sqrt(ch.colloc_weights), k) for ch in f.grid.charts]
    )
    blocks = [weights[:, None] * raw]
    scale = _overlap_scale(f, opts)
    m = f.manifold
    for c in (0, 1):
        o = 1 - c
        outer = np.flatnonzero(f.grid.charts[o].outer)
        rows = np.zeros((len(outer) * k, n_cols))
        rows[:, offs[c] : offs[c] + sizes[c]] = np.kron(f.grid.overlap[c], np.eye(k))
        tjac = m.transition_jacobian(f.charts[o], f.charts[c], f.values[o][outer])
        for p, node in enumerate(outer):
            col = offs[o] + node * k
            rows[p * k : (p + 1) * k, col : col + k] = -tjac[p]
        blocks.append(scale * rows)
    return np.concatenate(blocks), raw


def directional_fd(
    f: SurfaceMap, src: AlmostComplexSource, t: VariationField, step: float = 1e-5
) -> Array:
    """Central difference of the stacked raw residual along ``t``."""
    plus = f.from_flat(f.flat() + step * t.flat())
    minus = f.from_flat(f.flat() - step * t.flat())
    rp, rm = _residual_values(plus, src), _residual_values(minus, src)
    return np.concatenate([(rp[c] - rm[c]).ravel() for c in (0, 1)]) / (2 * step)


def _truncated_step(
    a: Array, r: Array, mu: float, opts: SolveOptions
) -> tuple[Array, int, bool]:
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    gap = kernel_gap(s, opts.gap_small, opts.min_gap, opts.expected_kernel, opts.index_gap)
    if gap is None:
        keep = int(np.sum(s > 1e-12 * s[0]))
        regular = opts.expected_kernel is None
    else:
        keep = len(s) - gap[0]
        regular = opts.expected_kernel in (None, gap[0])
    s_k = s[:keep]
    coef = (u[:, :keep].T @ r) * s_k / (s_k**2 + mu)
    return -(vt[:keep].T @ coef), len(s) - keep, regular


def solve(
    f0: SurfaceMap,
    src: AlmostComplexSource,
    opts: SolveOptions = SolveOptions(),
    slice_basis: Array | None = None,
    slice_origin: Array | None = None,
) -> SolveResult:
    """Gauss-Newton with truncated SVD and Levenberg damping.

    With ``slice_basis`` (orthonormal columns) the iterates stay on the affine
    slice through ``slice_origin`` orthogonal to those columns.
    """
    coords0 = homology_coordinates(f0)
    f = f0
    res = dbar(f, src).l2_norm
    if res <= opts.tol:
        logger.debug("Start map already solves dbar = 0 (%.2e)", res)
        return SolveResult(f, 0, res, "tol")

    proj = None
    if slice_basis is not None:
        proj = np.eye(slice_basis.shape[0]) - slice_basis @ slice_basis.T
        origin = f0.flat() if slice_origin is None else slice_origin
        x = f.flat()
        f = f.from_flat(origin + proj @ (x - origin))

    r = residual_vector(f, src, opts)
    obj = float(r @ r)
    mu = opts.damping
    frozen = None
    regular = True
    stopped_by = "max_iter"
    it = 0
    for it in range(1, opts.max_iter + 1):
        if frozen is None or not opts.frozen_jacobian:
            a, _ = _assemble(f, src, opts)
            if proj is not None:
                a = a @ proj
            frozen = a
        step, dropped, ok = _truncated_step(frozen, r, mu * float(np.max(np.abs(frozen))) ** 2, opts)
        regular = regular and ok
        for _ in range(12):
            trial = f.from_flat(f.flat() + step)
            r_trial = residual_vector(trial, src, opts)
            obj_trial = float(r_trial @ r_trial)
            if obj_trial <= obj or np.linalg.norm(step) <= opts.step_tol:
                break
            mu = max(10.0 * mu, 1e-12)
            step, dropped, _ = _truncated_step(frozen, r, mu * float(np.max(np.abs(frozen))) ** 2, opts)
        else:
            raise NoConvergenceError(it, dbar(f, src).l2_norm)
        f, r, obj = trial, r_trial, obj_trial
        mu = mu / 10.0
        res = dbar(f, src).l2_norm
        logger.debug(
            "GN iteration %d: residual %.3e step %.3e dropped %d", it, res, np.linalg.norm(step), dropped
        )
        if res <= opts.tol:
            stopped_by = "tol"
            break
        if np.linalg.norm(step) <= opts.step_tol * (1.0 + np.linalg.norm(f.flat())):
            stopped_by = "step_tol"
            break
    else:
        raise NoConvergenceError(it, res)

    coords = homology_coordinates(f)
    if np.max(np.abs(np.subtract(coords, coords0))) > 1e-3:
        raise NoConvergenceError(it, res, f"homology class moved from {coords0} to {coords}")
    if not regular:
        logger.warning("Kernel of the linearization differs from the expected dimension")
    return SolveResult(f, it, res, stopped_by, regular)


def gauss_newton_solve(
    f0: SurfaceMap, src: AlmostComplexSource, opts: SolveOptions = SolveOptions()
) -> SurfaceMap:
    return solve(f0, src, opts).f


def vertical_differential(
    f: SurfaceMap,
    src: AlmostComplexSource,
    fd_step: float = 1e-5,
    zero_tol: float = 1e-8,
    opts: SolveOptions = SolveOptions(),
) -> VerticalOperator:
    res = dbar(f, src).l2_norm
    if res > zero_tol:
        raise NotAtZeroError(f"dbar residual {res:.2e} exceeds {zero_tol:.0e}")
    opts = replace(opts, fd_step=fd_step)
    matrix, raw = _assemble(f, src, opts)
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    expected = opts.expected_kernel if opts.expected_kernel is not None else index_kernel_dim(f)
    gap = kernel_gap(s, opts.gap_small, opts.min_gap, expected, opts.index_gap)
    kernel_dim, ratio = (None, 0.0) if gap is None else gap
    logger.info(
        "Vertical differential: %d columns, kernel %s (gap %.2e)", matrix.shape[1], kernel_dim, ratio
    )
    return VerticalOperator(f, matrix, raw, s, vt, fd_step, kernel_dim, ratio)


def _apply_j(src: AlmostComplexSource, f: SurfaceMap, vals: tuple[Array, Array]) -> tuple[Array, Array]:
    out = []
    for c in (0, 1):
        j = src.j_matrix(f.charts[c], f.values[c])
        out.append(np.einsum("nab,nb->na", j, vals[c]))
    return out[0], out[1]


def split_D(
    op: VerticalOperator, f: SurfaceMap, src: AlmostComplexSource, t: VariationField
) -> tuple[tuple[Array, Array], tuple[Array, Array]]:
    """Complex-linear and antilinear parts of D applied to ``t``."""
    if op.f is not f:
        raise InvalidInputError("Operator was built at another map")
    d_t = op.apply(t)
    j_d_jt = _apply_j(src, f, op.apply(jtilde(src, f, t)))
    d1 = tuple(0.5 * (d_t[c] - j_d_jt[c]) for c in (0, 1))
    d2 = tuple(0.5 * (d_t[c] + j_d_jt[c]) for c in (0, 1))
    return (d1[0], d1[1]), (d2[0], d2[1])


def owned_norm(f: SurfaceMap, vals: tuple[Array, Array]) -> float:
    total = sum(
        float(np.dot(ch.flat_weights, np.sum(v**2, axis=-1))) for ch, v in zip(f.grid.charts, vals)
    )
    return float(np.sqrt(total))


def operator_scale(op: VerticalOperator) -> float:
    """Norm of D on its leading right singular vector, in the owned-node norm."""
    v = VariationField.from_flat(op.f, op.right_vectors[0])
    return owned_norm(op.f, op.apply(v)) / owned_norm(op.f, v.comps)


def rotation_defect(
    op: VerticalOperator, f: SurfaceMap, src: AlmostComplexSource, t: VariationField
) -> float:
    """|D(J t) + 2 J D2 t| relative to |D| |t|; zero whenever D t = 0."""
    d_jt = op.apply(jtilde(src, f, t))
    _, d2 = split_D(op, f, src, t)
    j_d2 = _apply_j(src, f, d2)
    lhs = (d_jt[0] + 2.0 * j_d2[0], d_jt[1] + 2.0 * j_d2[1])
    t_norm = owned_norm(f, t.comps)
    if t_norm == 0.0:
        return 0.0
    return owned_norm(f, lhs) / (t_norm * operator_scale(op))


def _quarter_nijenhuis(
    f: SurfaceMap, src: AlmostComplexSource, t: VariationField, h_fd: float
) -> tuple[Array, Array]:
    out = []
    for c in (0, 1):
        fx, fy = f.jacobian[c]
        j = src.j_matrix(f.charts[c], f.values[c])
        holo = 0.5 * (fx - np.einsum("nab,nb->na", j, fy))
        out.append(0.25 * nijenhuis_pointwise(src, f.charts[c], f.values[c], t.comps[c], holo, h_fd))
    return out[0], out[1]


@dataclass(frozen=True)
class D2Comparison:
    discrepancy: float
    fitted_constant: float
    d2_norm: float
    nijenhuis_norm: float = field(default=0.0)


def compare_d2(
    op: VerticalOperator,
    f: SurfaceMap,
    src: AlmostComplexSource,
    t: VariationField,
    h_fd: float = 1e-4,
) -> D2Comparison:
    _, d2 = split_D(op, f, src, t)
    quarter = _quarter_nijenhuis(f, src, t, h_fd)
    t_norm = owned_norm(f, t.comps)
    if t_norm == 0.0:
        return D2Comparison(0.0, 0.25, 0.0, 0.0)
    diff = tuple(d2[c] - quarter[c] for c in (0, 1))
    n_norm = owned_norm(f, quarter)
    inner = sum(
        float(np.dot(ch.flat_weights, np.sum(d2[c] * quarter[c], axis=-1)))
        for c, ch in enumerate(f.grid.charts)
    )
    fitted = 0.25 * inner / n_norm**2 if n_norm > 0 else 0.25
    return D2Comparison(owned_norm(f, (diff[0], diff[1])) / t_norm, fitted, owned_norm(f, d2), n_norm)


def d2_vs_nijenhuis(
    op: VerticalOperator, f: SurfaceMap, src: AlmostComplexSource, t: VariationField
) -> float:
    """Relative gap between D2 t and N_J(t, d_J f) / 4."""
    return compare_d2(op, f, src, t).discrepancy


def fitted_d2_constant(
    op: VerticalOperator, f: SurfaceMap, src: AlmostComplexSource, t: VariationField
) -> float:
    """Least-squares c in D2 t = c N_J(t, d_J f); 1/4 when the identity holds."""
    return compare_d2(op, f, src, t).fitted_constant
