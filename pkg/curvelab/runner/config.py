"""TOML run configuration with embedded defaults."""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from curvelab.exceptions import ConfigError

logger = logging.getLogger(__name__)

QUICK_GRID = (8, 16)


@dataclass(frozen=True)
class ManifoldConfig:
    name: str = "CP2"
    lam_area: float = 0.0


@dataclass(frozen=True)
class GridConfig:
    n_radial: int = 12
    n_angular: int = 24
    delta: float = 0.1


@dataclass(frozen=True)
class MapConfig:
    kind: str = "line"
    normal: tuple[tuple[float, float], ...] = ((0.0, 0.0), (0.0, 0.0), (1.0, 0.0))
    w0: tuple[float, float] = (0.0, 0.0)
    eps: float = 1e-2


@dataclass(frozen=True)
class PerturbationConfig:
    enabled: bool = True
    chart: int = 0
    center: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    radius: float = 0.6
    amplitude: float = 0.5
    matrix: tuple[tuple[float, ...], ...] = ()
    lam: float = 0.2


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_iter: int = 25
    fd_step: float = 1e-5
    overlap_weight: float = 1.0
    perturbed_tol: float = 1e-6


@dataclass(frozen=True)
class ModuliConfig:
    zero_tol: float = 1e-6
    gap_small: float = 1e-3
    min_gap: float = 1e4
    index_gap: float = 10.0
    rank_gap: float = 1e3


@dataclass(frozen=True)
class InvariantConfig:
    mc_samples: int = 32
    h: float = 1e-3
    lam: float = 0.3
    param_n_radial: int = 8
    param_n_angular: int = 16
    workers: int = 1


@dataclass(frozen=True)
class ContinuationConfig:
    n_steps: int = 10


@dataclass(frozen=True)
class ToleranceConfig:
    form: float = 1e-7
    partner: float = 1e-4
    closed: float = 1e-4
    compat: float = 1e-7
    quotient: float = 1e-8
    n_random: int = 20
    closed_h: float = 1e-2


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "cp2-line"
    class_name: str = ""


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    map: MapConfig = field(default_factory=MapConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    moduli: ModuliConfig = field(default_factory=ModuliConfig)
    invariant: InvariantConfig = field(default_factory=InvariantConfig)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    seed: int = 0
    quick: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_overrides(
        self,
        seed: int | None = None,
        grid: tuple[int, int] | None = None,
        quick: bool = False,
        workers: int | None = None,
    ) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if quick:
            n_r, n_a = QUICK_GRID
            cfg = replace(
                cfg,
                quick=True,
                grid=replace(cfg.grid, n_radial=n_r, n_angular=n_a),
                invariant=replace(cfg.invariant, mc_samples=min(cfg.invariant.mc_samples, 8)),
                tolerances=replace(cfg.tolerances, n_random=min(cfg.tolerances.n_random, 5)),
            )
        if grid is not None:
            cfg = replace(cfg, grid=replace(cfg.grid, n_radial=grid[0], n_angular=grid[1]))
        if workers is not None:
            cfg = replace(cfg, invariant=replace(cfg.invariant, workers=workers))
        return cfg


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _section(cls: type, raw: dict[str, Any], name: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"Unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: _freeze(v) for k, v in raw.items()})
    except TypeError as e:
        raise ConfigError(f"Bad [{name}] section: {e}") from e


def parse_config(raw: dict[str, Any]) -> RunConfig:
    sections: dict[str, Any] = {}
    top: dict[str, Any] = {}
    for f in fields(RunConfig):
        if f.name not in raw:
            continue
        if isinstance(raw[f.name], dict):
            default = f.default_factory()  # type: ignore[misc]
            sections[f.name] = _section(type(default), raw[f.name], f.name)
        else:
            top[f.name] = raw[f.name]
    unknown = set(raw) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(sorted(unknown))}")
    cfg = RunConfig(**sections, **top)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    tols = cfg.tolerances
    for name in ("form", "partner", "closed", "compat", "quotient", "closed_h"):
        if getattr(tols, name) <= 0:
            raise ConfigError(f"Tolerance {name} must be positive")
    if cfg.solver.tol <= 0 or cfg.solver.perturbed_tol <= 0:
        raise ConfigError("Solver tolerances must be positive")
    if cfg.continuation.n_steps < 1:
        raise ConfigError("Continuation needs at least one step")
    if cfg.invariant.mc_samples < 2:
        raise ConfigError("Monte Carlo needs at least two samples")
    if not 0.0 <= cfg.perturbation.lam <= 1.0 or not 0.0 <= cfg.invariant.lam <= 1.0:
        raise ConfigError("Path parameters must lie in [0, 1]")
