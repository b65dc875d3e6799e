"""The five runner commands: each resolves to a RunReport plus CSV tables."""

import logging
import math
from pathlib import Path
from typing import Callable

import numpy as np

from curvelab.ambient import ComplexProjectivePlane, polar_compatible_J
from curvelab.domain import SurfaceVectorField, mobius_generators
from curvelab.exceptions import ConfigError, CurveLabError
from curvelab.holomorphy import (
    SolveOptions,
    VerticalOperator,
    compare_d2,
    dbar,
    owned_norm,
    operator_scale,
    rotation_defect,
    solve,
    split_D,
    vertical_differential,
)
from curvelab.mapspace import (
    SurfaceMap,
    VariationField,
    affine_family,
    case_two_partner,
    chern_number,
    dump_columns,
    exterior_derivative_terms,
    form_eval,
    form_gram,
    homology_coordinates,
    is_immersed_symplectic,
    is_simple,
    jtilde,
    l2_inner,
    random_variation,
    tangent_variation,
)
from curvelab.moduli import (
    ModuliFrame,
    build_frame,
    class_checks,
    continue_path,
    full_gram_rank,
    gram_rank,
    invariant_integral,
    kernel_slice,
    quotient_compatible_J,
)
from curvelab.runner.report import RunReport, write_csv
from curvelab.runner.scenarios import Scenario

logger = logging.getLogger(__name__)

Command = Callable[[Scenario, Path], RunReport]

SINGULAR_COLUMNS = ("index", "sigma", "classification")
CONTINUATION_COLUMNS = ("lam", "kernel_dim", "gram_rank", "min_pairing", "iterations", "residual")
INVARIANT_COLUMNS = ("lam", "value", "raw", "stderr", "n_samples", "n_rejected", "n_solved", "method")


def _report(command: str, scenario: Scenario) -> RunReport:
    return RunReport(
        command=command,
        scenario={"name": scenario.name, "class": scenario.class_name, **scenario.config.to_dict()},
        expected_fail=scenario.expected_fail,
    )


def _norm(f: SurfaceMap, t: VariationField) -> float:
    return math.sqrt(max(l2_inner(f, t, t), 0.0))


def _random_domain_field(scenario: Scenario, rng: np.random.Generator) -> SurfaceVectorField:
    """Sum of Mobius fields with random smooth coefficients; smooth on the whole sphere."""
    grid = scenario.grid
    pts = (grid.sphere_points(0), grid.sphere_points(1))
    vals = [np.zeros(ch.size, dtype=complex) for ch in grid.charts]
    for gen in mobius_generators(grid):
        coef = rng.normal(size=4)
        for c in (0, 1):
            scal = coef[0] + pts[c] @ coef[1:]
            vals[c] = vals[c] + scal * gen.field.values[c]
    return SurfaceVectorField(grid, (vals[0], vals[1]))


def _solve_base(scenario: Scenario, report: RunReport) -> SurfaceMap | None:
    """Solve dbar = 0 for the integrable structure from the scenario's start map."""
    opts = scenario.solve_options()
    accept = scenario.config.solver.perturbed_tol
    holder: list[SurfaceMap] = []

    # stationary stops count when the residual is below perturbed_tol
    def check() -> tuple[float, bool]:
        result = solve(scenario.f0, scenario.manifold, opts)
        holder.append(result.f)
        return result.residual, result.residual <= accept

    report.run("solve_base", check, accept)
    return holder[0] if holder else None


def cmd_verify_form(scenario: Scenario, out_dir: Path) -> RunReport:
    report = _report("verify-form", scenario)
    tol = scenario.config.tolerances
    rng = np.random.default_rng(scenario.config.seed)
    f, src = scenario.f0, scenario.manifold
    samples = [(random_variation(f, rng), random_variation(f, rng)) for _ in range(tol.n_random)]

    def immersed() -> tuple[float, bool]:
        ok, margin = is_immersed_symplectic(f)
        return margin, ok

    def antisymmetry() -> tuple[float, bool]:
        worst = 0.0
        for t1, t2 in samples:
            a, b = form_eval(f, t1, t2).value, form_eval(f, t2, t1).value
            worst = max(worst, abs(a + b) / max(abs(a), abs(b), 1e-300))
        return worst, worst <= 1e-12

    def tangential() -> tuple[float, bool]:
        worst = 0.0
        for _, t2 in samples:
            tau = tangent_variation(f, _random_domain_field(scenario, rng))
            scale = _norm(f, tau) * _norm(f, t2)
            worst = max(worst, abs(form_eval(f, tau, t2).value) / max(scale, 1e-300))
        return worst, worst <= tol.form

    def positivity() -> tuple[float, bool]:
        worst = math.inf
        for t, _ in samples:
            worst = min(worst, form_eval(f, t, jtilde(src, f, t)).value / _norm(f, t) ** 2)
        return worst, worst > 0.0

    def partner() -> tuple[float, bool]:
        worst = math.inf
        for t, _ in samples:
            p = case_two_partner(src, f, t)
            worst = min(worst, form_eval(f, t, p).value / max(_norm(f, t) * _norm(f, p), 1e-300))
        return worst, worst >= tol.partner

    def compatibility() -> tuple[float, bool]:
        worst = 0.0
        for t1, t2 in samples:
            rotated = form_eval(f, jtilde(src, f, t1), jtilde(src, f, t2)).value
            diff = abs(rotated - form_eval(f, t1, t2).value)
            worst = max(worst, diff / (_norm(f, t1) * _norm(f, t2)))
        return worst, worst <= tol.compat

    def closedness() -> tuple[float, bool]:
        family = affine_family(f, [random_variation(f, rng) for _ in range(3)])
        terms = exterior_derivative_terms(family, tol.closed_h)
        halved = exterior_derivative_terms(family, 0.5 * tol.closed_h)
        scale = max(max(abs(x) for x in terms), 1e-300)
        coarse, fine = abs(sum(terms)) / scale, abs(sum(halved)) / scale
        logger.info("dOmega relative %.2e at h, %.2e at h/2", coarse, fine)
        return fine, fine <= tol.closed and (fine <= coarse or fine <= 1e-10)

    def simple() -> tuple[float, bool]:
        ok = is_simple(f)
        return float(ok), ok

    report.run("immersed_symplectic", immersed, 1e-8)
    report.run("antisymmetry", antisymmetry, 1e-12)
    report.run("tangential_vanishing", tangential, tol.form)
    report.run("positivity", positivity, 0.0)
    report.run("partner_nonzero", partner, tol.partner)
    report.run("compatibility", compatibility, tol.compat)
    report.run("closedness", closedness, tol.closed)
    report.run("simple", simple, 0.0)
    report.write(out_dir)
    return report


def _require_class(scenario: Scenario) -> None:
    if not scenario.class_name:
        raise ConfigError(f"Scenario {scenario.name} has no homology class to work with")


def _class_coords_error(scenario: Scenario, f: SurfaceMap) -> float:
    coords = scenario.manifold.lookup_class(scenario.class_name).coords
    return max(abs(x - c) for x, c in zip(homology_coordinates(f), coords))


def _line_planarity(f: SurfaceMap) -> float:
    """sigma_3 / sigma_1 of the normalized homogeneous image points; 0 for a line."""
    pts = np.concatenate(
        [f.manifold.to_homogeneous(f.charts[c], f.values[c][f.grid.charts[c].owned]) for c in (0, 1)]
    )
    pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    s = np.linalg.svd(pts, compute_uv=False)
    return float(s[-1] / s[0])


def cmd_solve(scenario: Scenario, out_dir: Path) -> RunReport:
    report = _report("solve", scenario)
    cfg = scenario.config
    report.add("dbar_initial", dbar(scenario.f0, scenario.manifold).l2_norm, math.inf, True)
    f = _solve_base(scenario, report)
    if f is None:
        report.write(out_dir)
        return report

    def immersed() -> tuple[float, bool]:
        ok, margin = is_immersed_symplectic(f)
        return margin, ok

    def degree() -> tuple[float, bool]:
        err = _class_coords_error(scenario, f)
        return err, err <= 1e-6

    def line() -> tuple[float, bool]:
        ratio = _line_planarity(f)
        return ratio, ratio <= 1e-6

    report.run("immersed", immersed, 1e-8)
    report.run("degree_preserved", degree, 1e-6)
    if isinstance(scenario.manifold, ComplexProjectivePlane) and scenario.class_name == "L":
        report.run("line_recovered", line, 1e-6)
    path = out_dir / "solution.txt"
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_columns(path, f)
    report.artifacts.append(str(path))

    if scenario.perturbation is None:
        report.skip("solve_perturbed", "scenario has no perturbation")
    else:
        src = scenario.path.at(cfg.perturbation.lam)
        opts = scenario.solve_options(perturbed=True)

        def perturbed() -> tuple[float, bool]:
            op = vertical_differential(f, scenario.manifold, opts.fd_step, cfg.moduli.zero_tol, opts)
            result = solve(f, src, opts, kernel_slice(op), f.flat())
            ok, _ = is_immersed_symplectic(result.f)
            err = _class_coords_error(scenario, result.f)
            return result.residual, result.residual <= cfg.solver.perturbed_tol and ok and err <= 1e-6

        report.run("solve_perturbed", perturbed, cfg.solver.perturbed_tol)
    report.write(out_dir)
    return report


def _singular_rows(op: VerticalOperator) -> list[dict[str, object]]:
    n = len(op.singular_values)
    k = op.kernel_dim or 0
    return [
        {"index": i, "sigma": float(s), "classification": "kernel" if i >= n - k else "range"}
        for i, s in enumerate(op.singular_values)
    ]


def _frame_checks(report: RunReport, frame: ModuliFrame, expected_kernel: int, scenario: Scenario) -> None:
    tol = scenario.config.tolerances
    f = frame.f
    report.add("kernel_dim", frame.kernel_dim, expected_kernel, frame.kernel_dim == expected_kernel)
    report.add("aut_in_kernel", frame.aut_residual, 1e-6, frame.aut_residual <= 1e-6)
    report.add(
        "quotient_dim",
        frame.quotient_dim,
        expected_kernel - 6,
        frame.quotient_dim == expected_kernel - 6,
    )
    rank = gram_rank(frame.gram, 1e-6, scenario.config.moduli.rank_gap)
    report.add("gram_rank", rank, frame.quotient_dim, rank == frame.quotient_dim)
    full = full_gram_rank(frame)
    report.add("full_gram_rank", full, frame.kernel_dim - 6, full == frame.kernel_dim - 6)

    def aut_degenerate() -> tuple[float, bool]:
        gram = form_gram(f, frame.aut_sub + frame.kernel)
        n_aut = len(frame.aut_sub)
        value = float(np.abs(gram[:n_aut, n_aut:]).max() / np.abs(gram).max())
        return value, value <= tol.form

    report.run("aut_degenerate", aut_degenerate, tol.form)

    holder: list[np.ndarray] = []

    def j_square() -> tuple[float, bool]:
        j = quotient_compatible_J(frame)
        holder.append(j)
        value = float(np.abs(j @ j + np.eye(len(j))).max())
        return value, value <= 1e-10

    report.run("quotient_J_square", j_square, 1e-10)
    if not holder:
        return
    j, om = holder[0], frame.gram
    compat = float(np.linalg.norm(j.T @ om @ j - om) / np.linalg.norm(om))
    report.add("quotient_J_compatible", compat, tol.quotient, compat <= tol.quotient)
    tame = float(np.linalg.eigvalsh(0.5 * (om @ j + (om @ j).T)).min())
    report.add("quotient_J_tame", tame, 0.0, tame > 0.0)

    def covariance() -> tuple[float, bool]:
        rng = np.random.default_rng(scenario.config.seed)
        worst = 0.0
        for _ in range(10):
            t = rng.normal(size=j.shape) + 2.0 * np.eye(len(j))
            moved = polar_compatible_J(t.T @ om @ t, t.T @ frame.metric_gram @ t)
            worst = max(worst, float(np.abs(moved - np.linalg.solve(t, j @ t)).max()))
        return worst, worst <= tol.quotient

    report.run("basis_covariance", covariance, tol.quotient)


def _d2_checks(report: RunReport, scenario: Scenario, f: SurfaceMap, frame: ModuliFrame) -> None:
    cfg = scenario.config
    rng = np.random.default_rng(cfg.seed + 1)
    scale = operator_scale(frame.op)

    def integrable() -> tuple[float, bool]:
        worst = 0.0
        for _ in range(cfg.tolerances.n_random):
            t = random_variation(f, rng)
            _, d2 = split_D(frame.op, f, scenario.manifold, t)
            worst = max(worst, owned_norm(f, d2) / (owned_norm(f, t.comps) * scale))
        return worst, worst <= 1e-6

    report.run("d2_integrable", integrable, 1e-6)
    if scenario.perturbation is None:
        report.skip("d2_nijenhuis", "scenario has no perturbation")
        report.skip("d2_constant", "scenario has no perturbation")
        report.skip("d2_kernel_rotation", "scenario has no perturbation")
        return
    src = scenario.path.at(cfg.perturbation.lam)
    opts = scenario.solve_options(perturbed=True)
    holder: list[tuple[SurfaceMap, VerticalOperator]] = []

    def nijenhuis() -> tuple[float, bool]:
        result = solve(f, src, opts, kernel_slice(frame.op), f.flat())
        op = vertical_differential(result.f, src, opts.fd_step, cfg.solver.perturbed_tol, opts)
        holder.append((result.f, op))
        worst = 0.0
        for _ in range(cfg.tolerances.n_random):
            worst = max(worst, compare_d2(op, result.f, src, random_variation(result.f, rng)).discrepancy)
        return worst, worst <= 1e-3

    report.run("d2_nijenhuis", nijenhuis, 1e-3)
    if not holder:
        report.skip("d2_constant", "perturbed solve failed")
        report.skip("d2_kernel_rotation", "perturbed solve failed")
        return
    fp, op = holder[0]
    fitted = compare_d2(op, fp, src, random_variation(fp, rng)).fitted_constant
    report.add("d2_constant", abs(fitted - 0.25), 0.01, abs(fitted - 0.25) <= 0.01)

    # D(Jt) = -2 J D2 t on the kernel of D at the perturbed structure
    def kernel_rotation() -> tuple[float, bool]:
        worst = max(rotation_defect(op, fp, src, t) for t in op.kernel())
        return worst, worst <= 1e-5

    report.run("d2_kernel_rotation", kernel_rotation, 1e-5)


def cmd_moduli(scenario: Scenario, out_dir: Path) -> RunReport:
    report = _report("moduli", scenario)
    _require_class(scenario)
    cfg = scenario.config
    info = class_checks(scenario.manifold, scenario.class_name)
    report.add("adjunction_defect", info.adjunction_defect, 0, info.adjunction_defect >= 0)
    report.add("hls_regular", float(info.hls_regular), 0, True, detail=f"c1={info.c1}")
    report.add("indecomposable", float(info.indecomposable), 0, True)
    if not info.hls_regular:
        report.skip("kernel_dim", "class has c1 < 1; not represented by regular spheres")
        report.write(out_dir)
        return report

    f = _solve_base(scenario, report)
    if f is None:
        report.write(out_dir)
        return report

    def c1_cross_check() -> tuple[float, bool]:
        err = abs(chern_number(f) - info.c1)
        return err, err <= 1e-3

    report.run("c1_cross_check", c1_cross_check, 1e-3)
    opts = scenario.solve_options()
    try:
        frame = build_frame(f, scenario.manifold, 0.0, cfg.moduli.zero_tol, opts)
    except CurveLabError as e:
        logger.error("Frame construction failed", exc_info=True)
        report.add("kernel_dim", math.nan, 2 * info.c1 + 4, False, detail=str(e))
        report.write(out_dir)
        return report
    ratio = frame.op.kernel_ratio
    report.add("kernel_gap", ratio, opts.min_gap, ratio >= opts.min_gap)
    _frame_checks(report, frame, 2 * info.c1 + 4, scenario)
    _d2_checks(report, scenario, f, frame)
    sv_path = write_csv(out_dir / "singular_values.csv", SINGULAR_COLUMNS, _singular_rows(frame.op))
    report.artifacts.append(str(sv_path))
    report.write(out_dir)
    return report


def cmd_continue(scenario: Scenario, out_dir: Path) -> RunReport:
    report = _report("continue", scenario)
    _require_class(scenario)
    cfg = scenario.config
    if scenario.perturbation is None:
        report.skip("continuation_complete", "scenario has no perturbation")
        report.write(out_dir)
        return report
    f = _solve_base(scenario, report)
    if f is None:
        report.write(out_dir)
        return report
    opts = scenario.solve_options(perturbed=True)
    n_steps = cfg.continuation.n_steps
    trace = continue_path(f, scenario.path, n_steps, opts, cfg.moduli.zero_tol)
    report.artifacts.append(str(write_csv(out_dir / "continuation.csv", CONTINUATION_COLUMNS, trace.rows())))

    report.add("continuation_complete", len(trace.lams), n_steps, not trace.truncated, detail=trace.failure)
    expected = 2 * scenario.manifold.lookup_class(scenario.class_name).c1 + 4
    dims_ok = bool(trace.kernel_dims) and all(k == expected for k in trace.kernel_dims)
    report.add("kernel_dim_constant", min(trace.kernel_dims, default=0), expected, dims_ok)
    ranks_ok = bool(trace.gram_ranks) and all(r == expected - 6 for r in trace.gram_ranks)
    report.add("gram_rank_full", min(trace.gram_ranks, default=0), expected - 6, ranks_ok)
    worst = min(trace.min_pairings, default=0.0)
    report.add("min_pairing", worst, 1e-6, worst >= 1e-6)

    if cfg.quick or trace.truncated:
        report.skip("step_halving", "quick run" if cfg.quick else "continuation truncated")
    else:

        def halving() -> tuple[float, bool]:
            fine = continue_path(f, scenario.path, 2 * n_steps, opts, cfg.moduli.zero_tol, frames=False)
            if fine.truncated:
                return math.inf, False
            diff = float(np.abs(fine.maps[-1].flat() - trace.maps[-1].flat()).max())
            return diff, diff <= 1e-6

        report.run("step_halving", halving, 1e-6)
    report.write(out_dir)
    return report


def cmd_invariant(scenario: Scenario, out_dir: Path) -> RunReport:
    report = _report("invariant", scenario)
    cfg = scenario.config
    inv = cfg.invariant
    chart = scenario.quotient_chart()
    opts = SolveOptions(
        tol=cfg.solver.perturbed_tol * 1e-2,
        max_iter=cfg.solver.max_iter,
        fd_step=cfg.solver.fd_step,
        frozen_jacobian=True,
        gap_small=cfg.moduli.gap_small,
        min_gap=cfg.moduli.min_gap,
        index_gap=cfg.moduli.index_gap,
    )
    estimates = []
    for lam in (0.0, inv.lam):
        try:
            est = invariant_integral(
                chart,
                scenario.path.at(lam),
                scenario.perturbation,
                mc_samples=inv.mc_samples,
                seed=cfg.seed,
                h=inv.h,
                workers=inv.workers,
                opts=opts,
                zero_tol=cfg.moduli.zero_tol,
            )
        except CurveLabError as e:
            logger.error("Invariant integral at lam=%g failed", lam, exc_info=True)
            report.add("integral_samples", math.nan, 0.05, False, detail=str(e))
            report.write(out_dir)
            return report
        estimates.append(est)
    rows = [
        {"lam": lam, **{k: getattr(est, k) for k in INVARIANT_COLUMNS[1:]}}
        for lam, est in zip((0.0, inv.lam), estimates)
    ]
    report.artifacts.append(str(write_csv(out_dir / "invariant.csv", INVARIANT_COLUMNS, rows)))

    base, moved = estimates
    report.add("integral_positive", base.value, 0.0, base.value > 0.0)
    rel = base.stderr / abs(base.value) if base.value else math.inf
    report.add("integral_stderr", rel, 0.1, rel <= 0.1)
    if chart.method == "quadrature":
        err = abs(base.value - 1.0)
        report.add("integral_value", err, 0.02, err <= 0.02)
    tol = 3.0 * math.hypot(base.stderr, moved.stderr) + 1e-3 * abs(base.value)
    diff = abs(base.value - moved.value)
    report.add("integral_invariance", diff, tol, diff <= tol)
    report.write(out_dir)
    return report


COMMANDS: dict[str, Command] = {
    "verify-form": cmd_verify_form,
    "solve": cmd_solve,
    "moduli": cmd_moduli,
    "continue": cmd_continue,
    "invariant": cmd_invariant,
}
