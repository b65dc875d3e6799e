"""Moduli data at a holomorphic sphere: kernel, quotient, form and integral."""

import abc
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Generator

import numpy as np
import scipy.linalg

from curvelab.ambient import (
    AlmostComplexSource,
    AmbientManifold,
    Array,
    ComplexProjectivePlane,
    Perturbation,
    SphereProduct,
    StructurePath,
    polar_compatible_J,
)
from curvelab.domain import SphereGrid, build_grid, mobius_generators
from curvelab.exceptions import (
    CurveLabError,
    NonRegularPointError,
    NonSymplecticFrameError,
    NotImmersedError,
    SampleRejectedError,
)
from curvelab.holomorphy import (
    SolveOptions,
    VerticalOperator,
    solve,
    vertical_differential,
)
from curvelab.mapspace import (
    SurfaceMap,
    VariationField,
    form_gram,
    is_immersed_symplectic,
    l2_inner,
    line_map,
    metric_gram,
    sphere_section_map,
    tangent_variation,
)
from curvelab.utils import map_jobs

logger = logging.getLogger(__name__)

MAX_REJECT_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class ModuliFrame:
    f: SurfaceMap
    src: AlmostComplexSource
    lam: float
    op: VerticalOperator
    kernel: list[VariationField]
    aut_sub: list[VariationField]
    quotient_basis: list[VariationField]
    gram: Array
    metric_gram: Array
    full_gram: Array
    aut_residual: float

    @property
    def kernel_dim(self) -> int:
        return len(self.kernel)

    @property
    def quotient_dim(self) -> int:
        return len(self.quotient_basis)


def gram_rank(matrix: Array, small: float = 1e-6, min_gap: float = 1e3) -> int:
    """Numerical rank of a (possibly antisymmetric) matrix from a singular-value gap."""
    s = np.linalg.svd(matrix, compute_uv=False)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    ratios = s[:-1] / np.maximum(s[1:], np.finfo(float).tiny)
    candidates = np.flatnonzero((ratios >= min_gap) & (s[1:] < small * s[0]))
    if len(candidates) == 0:
        return len(s)
    return int(candidates[0]) + 1


def full_gram_rank(frame: ModuliFrame) -> int:
    return gram_rank(frame.full_gram)


def _l2_orthonormalize(f: SurfaceMap, vectors: list[VariationField]) -> list[VariationField]:
    k = len(vectors)
    gram = np.array([[l2_inner(f, vectors[i], vectors[j]) for j in range(k)] for i in range(k)])
    chol = np.linalg.cholesky(gram)
    coef = np.linalg.inv(chol).T
    return [_combine(f, vectors, coef[:, i]) for i in range(k)]


def _combine(f: SurfaceMap, vectors: list[VariationField], coef: Array) -> VariationField:
    comps = tuple(sum(a * v.comps[c] for a, v in zip(coef, vectors)) for c in (0, 1))
    return VariationField(f, (comps[0], comps[1]))


def build_frame(
    f: SurfaceMap,
    src: AlmostComplexSource,
    lam: float = 0.0,
    zero_tol: float = 1e-8,
    opts: SolveOptions = SolveOptions(),
) -> ModuliFrame:
    immersed, margin = is_immersed_symplectic(f)
    if not immersed:
        raise NotImmersedError(f"Curve is not an immersed symplectic sphere (margin {margin:.2e})")
    op = vertical_differential(f, src, opts.fd_step, zero_tol, opts)
    if op.kernel_dim is None:
        raise NonRegularPointError("No singular-value gap separates the kernel")
    kernel = op.kernel()
    aut_sub = [tangent_variation(f, g.field) for g in mobius_generators(f.grid)]
    sigma_max = float(op.singular_values[0])
    aut_residual = max(
        float(np.linalg.norm(np.concatenate([v.ravel() for v in op.apply(a)]))) for a in aut_sub
    ) / sigma_max

    pairing = np.array([[l2_inner(f, k, a) for a in aut_sub] for k in kernel])
    null = scipy.linalg.null_space(pairing.T, rcond=1e-8)
    quotient = _l2_orthonormalize(f, [_combine(f, kernel, null[:, i]) for i in range(null.shape[1])])
    gram = form_gram(f, quotient)
    logger.debug(
        "Frame at lam=%g: kernel %d, quotient %d, aut residual %.2e",
        lam,
        len(kernel),
        len(quotient),
        aut_residual,
    )
    return ModuliFrame(
        f=f,
        src=src,
        lam=lam,
        op=op,
        kernel=kernel,
        aut_sub=aut_sub,
        quotient_basis=quotient,
        gram=gram,
        metric_gram=metric_gram(src, f, quotient),
        full_gram=form_gram(f, kernel),
        aut_residual=aut_residual,
    )


def quotient_compatible_J(frame: ModuliFrame) -> Array:
    dim = frame.quotient_dim
    if dim == 0 or gram_rank(frame.gram) < dim:
        raise NonSymplecticFrameError(
            f"Restricted form has rank {gram_rank(frame.gram)} on a {dim}-dimensional quotient"
        )
    return polar_compatible_J(frame.gram, frame.metric_gram)


@dataclass
class ContinuationTrace:
    lams: list[float] = field(default_factory=list)
    kernel_dims: list[int] = field(default_factory=list)
    gram_ranks: list[int] = field(default_factory=list)
    min_pairings: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    maps: list[SurfaceMap] = field(default_factory=list)
    truncated: bool = False
    failure: str = ""

    def rows(self) -> list[dict[str, Any]]:
        return [
            {
                "lam": lam,
                "kernel_dim": k,
                "gram_rank": r,
                "min_pairing": p,
                "iterations": it,
                "residual": res,
            }
            for lam, k, r, p, it, res in zip(
                self.lams,
                self.kernel_dims,
                self.gram_ranks,
                self.min_pairings,
                self.iterations,
                self.residuals,
            )
        ]


def kernel_slice(op: VerticalOperator) -> Array:
    """Orthonormal columns spanning the kernel of ``op``; steps stay orthogonal to them."""
    if op.kernel_dim is None:
        raise NonRegularPointError("No singular-value gap separates the kernel")
    return op.right_vectors[len(op.right_vectors) - op.kernel_dim :].T.copy()


def continue_path(
    f0: SurfaceMap,
    sp: StructurePath,
    n_steps: int,
    opts: SolveOptions = SolveOptions(),
    zero_tol: float = 1e-6,
    frames: bool = True,
) -> ContinuationTrace:
    """Follow the curve through J_lam, lam = k / n_steps, on a fixed slice."""
    trace = ContinuationTrace()
    base = sp.at(0.0)
    slice_basis = kernel_slice(vertical_differential(f0, base, opts.fd_step, zero_tol, opts))
    origin = f0.flat()
    f = f0
    for k in range(1, n_steps + 1):
        lam = k / n_steps
        src = sp.at(lam)
        try:
            result = solve(f, src, opts, slice_basis, origin)
            frame = build_frame(result.f, src, lam, zero_tol, opts) if frames else None
        except CurveLabError as e:
            logger.warning("Continuation stopped at lam=%g: %s", lam, e)
            trace.truncated = True
            trace.failure = str(e)
            break
        f = result.f
        trace.lams.append(lam)
        trace.iterations.append(result.iterations)
        trace.residuals.append(result.residual)
        trace.maps.append(f)
        if frame is not None:
            s = np.linalg.svd(frame.gram, compute_uv=False)
            trace.kernel_dims.append(frame.kernel_dim)
            trace.gram_ranks.append(gram_rank(frame.gram))
            trace.min_pairings.append(float(s[-1] / s[0]) if len(s) else 0.0)
        else:
            trace.kernel_dims.append(-1)
            trace.gram_ranks.append(-1)
            trace.min_pairings.append(float("nan"))
        logger.info("lam=%g solved in %d iterations (residual %.2e)", lam, result.iterations, result.residual)
    return trace


class QuotientChart(abc.ABC):
    """A global parametrization of the quotient moduli by reference curves."""

    dim: int
    method: str

    def __init__(self, manifold: AmbientManifold, grid: SphereGrid) -> None:
        self.manifold = manifold
        self.grid = grid

    @abc.abstractmethod
    def samples(self, n: int, rng: np.random.Generator) -> tuple[list[Any], Array]:
        """Sample points and their integration weights."""

    @abc.abstractmethod
    def section(self, point: Any, shift: Array, anchor: SurfaceMap | None = None) -> SurfaceMap:
        """Reference curve at ``point`` moved by ``shift`` in chart coordinates."""


class LineChart(QuotientChart):
    """Lines {Z0 + alpha Z1 + beta Z2 = 0}, sampled from the Fubini-Study measure."""

    dim = 4
    method = "importance"

    def samples(self, n: int, rng: np.random.Generator) -> tuple[list[Any], Array]:
        g = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
        alpha, beta = g[:, 1] / g[:, 0], g[:, 2] / g[:, 0]
        density = 2.0 / (np.pi**2 * (1.0 + np.abs(alpha) ** 2 + np.abs(beta) ** 2) ** 3)
        points = [(complex(a), complex(b)) for a, b in zip(alpha, beta)]
        return points, 1.0 / (n * density)

    def section(self, point: Any, shift: Array, anchor: SurfaceMap | None = None) -> SurfaceMap:
        alpha = point[0] + shift[0] + 1j * shift[1]
        beta = point[1] + shift[2] + 1j * shift[3]
        normal = (1.0, alpha, beta)
        pivot = int(np.argmax(np.abs((1.0, point[0], point[1]))))
        charts = None if anchor is None else anchor.charts
        assert isinstance(self.manifold, ComplexProjectivePlane)
        return line_map(self.manifold, self.grid, normal, pivot, charts)


class SphereFamilyChart(QuotientChart):
    """Spheres z -> (z, w0), w0 on a quadrature grid of the parameter sphere."""

    dim = 2
    method = "quadrature"

    def __init__(
        self, manifold: AmbientManifold, grid: SphereGrid, param_grid: SphereGrid
    ) -> None:
        super().__init__(manifold, grid)
        self.param_grid = param_grid

    def samples(self, n: int, rng: np.random.Generator) -> tuple[list[Any], Array]:
        points, weights = [], []
        for c, chart in enumerate(self.param_grid.charts):
            for zeta, w in zip(chart.zeta[chart.owned], chart.flat_weights[chart.owned]):
                points.append((c, complex(zeta)))
                weights.append(w)
        return points, np.asarray(weights)

    def section(self, point: Any, shift: Array, anchor: SurfaceMap | None = None) -> SurfaceMap:
        c, zeta = point
        w0 = zeta + shift[0] + 1j * shift[1]
        charts = None if anchor is None else anchor.charts
        assert isinstance(self.manifold, SphereProduct)
        return sphere_section_map(self.manifold, self.grid, w0, inverted=c == 1, charts=charts)


def pfaffian(a: Array) -> float:
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n == 2:
        return float(a[0, 1])
    if n == 4:
        return float(a[0, 1] * a[2, 3] - a[0, 2] * a[1, 3] + a[0, 3] * a[1, 2])
    raise ValueError(f"Pfaffian of a {n}x{n} matrix is not supported")


@dataclass(frozen=True)
class SampleOutcome:
    value: float
    rejected: bool = False
    solved: bool = False
    reason: str = ""


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    raw: float
    stderr: float
    n_samples: int
    n_rejected: int
    n_solved: int
    method: str


def _touches(f: SurfaceMap, perturbation: Perturbation | None) -> bool:
    if perturbation is None:
        return False
    return any(
        np.any(perturbation.bilinear(f.manifold, f.charts[c], f.values[c]) != 0.0) for c in (0, 1)
    )


def _sample_job(
    chart: QuotientChart,
    src: AlmostComplexSource,
    perturbation: Perturbation | None,
    point: Any,
    h: float,
    opts: SolveOptions,
    zero_tol: float,
) -> Generator[None, None, SampleOutcome]:
    centre = chart.section(point, np.zeros(chart.dim))
    yield
    needs_solve = not src.integrable and _touches(centre, perturbation)
    slice_basis = None
    if needs_solve:
        op = vertical_differential(centre, src.manifold, opts.fd_step, zero_tol, opts)
        slice_basis = kernel_slice(op)
        yield

    def solved(shift: Array) -> SurfaceMap:
        ref = chart.section(point, shift, centre)
        if not needs_solve:
            return ref
        return solve(ref, src, opts, slice_basis, ref.flat()).f

    f_centre = solved(np.zeros(chart.dim))
    yield
    immersed, margin = is_immersed_symplectic(f_centre)
    if not immersed:
        return SampleOutcome(0.0, rejected=True, reason=f"not immersed ({margin:.2e})")
    if needs_solve:
        frame = build_frame(f_centre, src, zero_tol=zero_tol, opts=opts)
        if frame.quotient_dim != chart.dim:
            return SampleOutcome(
                0.0, rejected=True, reason=f"quotient has dimension {frame.quotient_dim}, chart {chart.dim}"
            )
    tangents = []
    for i in range(chart.dim):
        e = np.zeros(chart.dim)
        e[i] = h
        plus, minus = solved(e), solved(-e)
        comps = tuple((plus.values[c] - minus.values[c]) / (2 * h) for c in (0, 1))
        tangents.append(VariationField(f_centre, (comps[0], comps[1])))
        yield
    gram = form_gram(f_centre, tangents)
    return SampleOutcome(pfaffian(gram), solved=needs_solve)


def invariant_integral(
    chart: QuotientChart,
    src: AlmostComplexSource,
    perturbation: Perturbation | None = None,
    mc_samples: int = 64,
    seed: int = 0,
    h: float = 1e-3,
    workers: int = 1,
    opts: SolveOptions = SolveOptions(frozen_jacobian=True),
    zero_tol: float = 1e-6,
) -> IntegralEstimate:
    """Integral of the top power of the quotient form over the chart.

    ``value`` uses half the form, so the spheres z -> (z, w0) give the area of
    the second factor; ``raw`` is the integral of the form itself.
    """
    rng = np.random.default_rng(seed)
    points, weights = chart.samples(mc_samples, rng)

    def job(index: int, point: Any) -> Generator[None, None, SampleOutcome]:
        try:
            outcome = yield from _sample_job(chart, src, perturbation, point, h, opts, zero_tol)
        except CurveLabError as e:
            logger.info("Sample %d rejected: %s", index, e)
            return SampleOutcome(0.0, rejected=True, reason=str(e))
        return outcome

    tasks = map_jobs(job, points, workers)
    outcomes = []
    for task in tasks:
        if task.error is not None or task.result is None:
            outcomes.append(SampleOutcome(0.0, rejected=True, reason=repr(task.error)))
        else:
            outcomes.append(task.result)
    rejected = sum(o.rejected for o in outcomes)
    if rejected > MAX_REJECT_FRACTION * len(outcomes):
        raise SampleRejectedError(f"{rejected} of {len(outcomes)} samples rejected")

    k = chart.dim // 2
    scale = 1.0 / 2.0**k
    values = np.array([o.value for o in outcomes]) * weights
    keep = np.array([not o.rejected for o in outcomes])
    if chart.method == "importance":
        contrib = values[keep] * len(outcomes)
        raw = float(np.mean(contrib))
        stderr = float(np.std(contrib, ddof=1) / math.sqrt(len(contrib))) if len(contrib) > 1 else 0.0
    else:
        raw = float(np.sum(values[keep]))
        stderr = _half_rule_error(chart, values, keep)
    logger.info("Invariant integral %.6g +- %.2g (%d rejected)", raw * scale, stderr * scale, rejected)
    return IntegralEstimate(
        value=raw * scale,
        raw=raw,
        stderr=stderr * scale,
        n_samples=len(outcomes),
        n_rejected=rejected,
        n_solved=sum(o.solved for o in outcomes),
        method=chart.method,
    )


def _half_rule_error(chart: QuotientChart, values: Array, keep: Array) -> float:
    """Compare the tensor rule with every other angular node dropped."""
    if not isinstance(chart, SphereFamilyChart):
        return 0.0
    n_ang = chart.param_grid.n_angular
    mask = np.tile(np.arange(n_ang) % 2 == 0, len(values) // n_ang)
    coarse = float(np.sum(2.0 * values[keep & mask]))
    return abs(coarse - float(np.sum(values[keep])))


def default_param_grid() -> SphereGrid:
    return build_grid(8, 16, 0.1)


@dataclass(frozen=True)
class ClassCheck:
    name: str
    c1: int
    self_int: int
    adjunction_defect: int
    hls_regular: bool
    embedded_expected: bool
    indecomposable: bool


def _effective_splits(m: AmbientManifold, coords: tuple[int, ...]) -> bool:
    """Whether the class is a sum of two nonzero classes with nonnegative entries."""
    if any(c < 0 for c in coords):
        return False
    for part in np.ndindex(*[c + 1 for c in coords]):
        rest = tuple(c - p for c, p in zip(coords, part))
        if any(part) and any(rest):
            return True
    return False


def class_checks(m: AmbientManifold, name: str) -> ClassCheck:
    info = m.lookup_class(name)
    defect = info.self_int - info.c1 + 2
    return ClassCheck(
        name=info.name,
        c1=info.c1,
        self_int=info.self_int,
        adjunction_defect=defect,
        hls_regular=info.c1 >= 1,
        embedded_expected=defect == 0,
        indecomposable=not _effective_splits(m, info.coords),
    )
