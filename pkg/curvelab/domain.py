"""The domain sphere CP^1 covered by two overlapping stereographic disks.

Chart 0 uses ``z``, chart 1 uses ``w = 1/z``. Each chart carries polar
tensor-product nodes: Gauss-Legendre in ``r`` on ``[0, 1]`` plus a second
panel on ``(1, 1 + delta]``, and a trapezoidal rule in ``theta``. Nodes with
``r <= 1`` are owned by their chart; the outer panel only feeds interpolation,
derivatives and the overlap agreement rows of the solvers.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from curvelab.ambient import Array, CArray, smooth_step
from curvelab.exceptions import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

RESOLUTION_TOL = 1e-4

ChartFunction = Callable[[int, CArray], NDArray]


def barycentric_weights(x: Array) -> Array:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def barycentric_diff(x: Array) -> Array:
    w = barycentric_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def barycentric_rows(x: Array, pts: Array) -> Array:
    """Lagrange interpolation rows from nodes ``x`` to points ``pts``."""
    w = barycentric_weights(x)
    diff = pts[:, None] - x[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w[None, :] / diff
        rows = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    rows[hit] = exact[hit].astype(float)
    return rows


def fourier_diff(n: int) -> Array:
    h = 2 * np.pi / n
    k = np.arange(n)
    lag = k[:, None] - k[None, :]
    with np.errstate(divide="ignore"):
        d = 0.5 * (-1.0) ** lag / np.tan(lag * h / 2)
    np.fill_diagonal(d, 0.0)
    return d


def fourier_rows(n: int, offset: float, theta: Array) -> Array:
    """Trigonometric interpolation rows (even ``n``) to angles ``theta``."""
    nodes = offset + 2 * np.pi * np.arange(n) / n
    x = theta[:, None] - nodes[None, :]
    half = np.sin(x / 2)
    small = np.abs(half) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = np.sin(n * x / 2) * np.cos(x / 2) / (n * half)
    return np.where(small, 1.0, rows)


@dataclass(frozen=True, eq=False)
class ChartGrid:
    index: int
    r: Array
    theta: Array
    theta_offset: float
    n_inner: int
    zeta: CArray
    dx: Array
    dy: Array
    flat_weights: Array
    colloc_weights: Array
    owned: NDArray[np.bool_]
    blend: Array

    @property
    def size(self) -> int:
        return len(self.zeta)

    @property
    def outer(self) -> NDArray[np.bool_]:
        return ~self.owned

    @property
    def round_weights(self) -> Array:
        return self.flat_weights * 4.0 / (1.0 + np.abs(self.zeta) ** 2) ** 2

    def interp_matrix(self, zeta: CArray) -> Array:
        zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
        radius = np.abs(zeta)
        if np.any(radius > self.r[-1] * (1 + 1e-12)):
            raise InvalidInputError(f"Point outside chart {self.index} disk")
        radial = barycentric_rows(self.r, radius)
        angular = fourier_rows(len(self.theta), self.theta_offset, np.angle(zeta))
        return np.einsum("pi,pj->pij", radial, angular).reshape(len(zeta), -1)


def _chart(
    index: int, n_radial: int, n_angular: int, delta: float
) -> ChartGrid:
    n_outer = max(3, n_radial // 4)
    xi, wi = np.polynomial.legendre.leggauss(n_radial)
    xo, wo = np.polynomial.legendre.leggauss(n_outer)
    r = np.concatenate([0.5 * (xi + 1), 1 + 0.5 * delta * (xo + 1)])
    w_r = np.concatenate([0.5 * wi, 0.5 * delta * wo])
    offset = index * np.pi / n_angular
    theta = offset + 2 * np.pi * np.arange(n_angular) / n_angular

    rr, tt = np.meshgrid(r, theta, indexing="ij")
    rr, tt = rr.ravel(), tt.ravel()
    eye_r, eye_t = np.eye(len(r)), np.eye(n_angular)
    d_r = np.kron(barycentric_diff(r), eye_t)
    d_t = np.kron(eye_r, fourier_diff(n_angular))
    cos, sin = np.cos(tt)[:, None], np.sin(tt)[:, None]
    dx = cos * d_r - (sin / rr[:, None]) * d_t
    dy = sin * d_r + (cos / rr[:, None]) * d_t

    colloc = np.repeat(w_r * r, n_angular) * 2 * np.pi / n_angular
    owned = np.repeat(np.arange(len(r)) < n_radial, n_angular)
    log_r_max = np.log1p(delta)
    blend = 1.0 - smooth_step((np.log(rr) + log_r_max) / (2 * log_r_max))
    return ChartGrid(
        index=index,
        r=r,
        theta=theta,
        theta_offset=offset,
        n_inner=n_radial,
        zeta=rr * np.exp(1j * tt),
        dx=dx,
        dy=dy,
        flat_weights=np.where(owned, colloc, 0.0),
        colloc_weights=colloc,
        owned=owned,
        blend=blend,
    )


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n_radial: int
    n_angular: int
    delta: float
    charts: tuple[ChartGrid, ChartGrid]
    overlap: tuple[Array, Array]
    """``overlap[c]`` interpolates chart ``c`` data to the outer nodes of chart ``1 - c``."""

    @property
    def sizes(self) -> tuple[int, int]:
        return self.charts[0].size, self.charts[1].size

    @property
    def n_nodes(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, int]:
        return 0, self.charts[0].size

    def stack(self, per_chart: tuple[NDArray, NDArray]) -> NDArray:
        return np.concatenate(per_chart, axis=0)

    def split(self, flat: NDArray) -> tuple[NDArray, NDArray]:
        n0 = self.charts[0].size
        return flat[:n0], flat[n0:]

    def sphere_points(self, chart_id: int) -> Array:
        zeta = self.charts[chart_id].zeta
        if chart_id == 1:
            zeta = zeta.conj()
        s = 1.0 + np.abs(zeta) ** 2
        height = (1.0 - np.abs(zeta) ** 2) / s
        if chart_id == 1:
            height = -height
        return np.stack([2 * zeta.real / s, 2 * zeta.imag / s, height], axis=-1)

    def describe(self) -> dict[str, float]:
        return {"n_radial": self.n_radial, "n_angular": self.n_angular, "delta": self.delta}

    def __repr__(self) -> str:
        return f"<SphereGrid {self.n_radial}x{self.n_angular} delta={self.delta:g}>"


def other_chart_coords(zeta: CArray) -> CArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 / zeta


def build_grid(n_radial: int, n_angular: int, delta: float = 0.1) -> SphereGrid:
    if n_radial < 8 or n_angular < 16 or n_angular % 2:
        raise ConfigError(
            f"Grid {n_radial}x{n_angular} too small (need n_radial >= 8, even n_angular >= 16)"
        )
    if not 0 < delta < 0.2:
        raise ConfigError(f"Overlap width delta={delta} outside (0, 0.2)")
    charts = (_chart(0, n_radial, n_angular, delta), _chart(1, n_radial, n_angular, delta))
    overlap = tuple(
        charts[c].interp_matrix(other_chart_coords(charts[1 - c].zeta[charts[1 - c].outer]))
        for c in (0, 1)
    )
    logger.debug("Built grid %dx%d delta=%g", n_radial, n_angular, delta)
    return SphereGrid(n_radial, n_angular, float(delta), charts, (overlap[0], overlap[1]))


@dataclass(frozen=True, eq=False)
class SurfaceScalar:
    """Per-node values in both charts, possibly with trailing component axes."""

    grid: SphereGrid
    values: tuple[NDArray, NDArray]

    def __post_init__(self) -> None:
        for chart, vals in zip(self.grid.charts, self.values):
            if len(vals) != chart.size:
                raise InvalidInputError("Scalar values do not match the grid")

    @classmethod
    def from_function(cls, grid: SphereGrid, fn: ChartFunction) -> "SurfaceScalar":
        return cls(grid, (fn(0, grid.charts[0].zeta), fn(1, grid.charts[1].zeta)))


@dataclass(frozen=True, eq=False)
class SurfaceVectorField:
    """Field ``V d/dz`` in chart 0 and ``V d/dw`` in chart 1; ``V`` complex."""

    grid: SphereGrid
    values: tuple[CArray, CArray]

    def __post_init__(self) -> None:
        for chart, vals in zip(self.grid.charts, self.values):
            if vals.shape != (chart.size,):
                raise InvalidInputError("Vector field values do not match the grid")

    @classmethod
    def from_chart0(cls, grid: SphereGrid, fn: ChartFunction) -> "SurfaceVectorField":
        z0 = grid.charts[0].zeta
        w1 = grid.charts[1].zeta
        v0 = np.asarray(fn(0, z0), dtype=complex)
        v1 = -(w1**2) * np.asarray(fn(0, other_chart_coords(w1)), dtype=complex)
        return cls(grid, (v0, v1))

    def real_components(self, chart_id: int) -> Array:
        v = self.values[chart_id]
        return np.stack([v.real, v.imag], axis=-1)


@dataclass(frozen=True)
class MobiusGenerator:
    index: int
    label: str
    field: SurfaceVectorField


_MOBIUS = ((1, 0, "1"), (1j, 0, "i"), (1, 1, "z"), (1j, 1, "iz"), (1, 2, "z^2"), (1j, 2, "iz^2"))


def mobius_generators(grid: SphereGrid) -> list[MobiusGenerator]:
    out = []
    for index, (coef, power, label) in enumerate(_MOBIUS, start=1):
        v0 = coef * grid.charts[0].zeta ** power
        v1 = -coef * grid.charts[1].zeta ** (2 - power)
        field = SurfaceVectorField(grid, (v0.astype(complex), v1.astype(complex)))
        out.append(MobiusGenerator(index, f"{label} d/dz", field))
    return out


def j_domain(v: SurfaceVectorField) -> SurfaceVectorField:
    return SurfaceVectorField(v.grid, (1j * v.values[0], 1j * v.values[1]))


def overlap_mismatch(s: SurfaceScalar) -> float:
    grid = s.grid
    worst = 0.0
    for c in (0, 1):
        other = s.values[1 - c][grid.charts[1 - c].outer]
        worst = max(worst, float(np.abs(grid.overlap[c] @ s.values[c] - other).max()))
    return worst


def surface_derivative(
    s: SurfaceScalar, check: bool = True
) -> tuple[SurfaceScalar, SurfaceScalar]:
    grid = s.grid
    if check:
        mismatch = overlap_mismatch(s)
        if mismatch > RESOLUTION_TOL:
            logger.warning(
                "Data under-resolved on %r: overlap mismatch %.2e", grid, mismatch
            )
    dx = tuple(c.dx @ v for c, v in zip(grid.charts, s.values))
    dy = tuple(c.dy @ v for c, v in zip(grid.charts, s.values))
    return SurfaceScalar(grid, (dx[0], dx[1])), SurfaceScalar(grid, (dy[0], dy[1]))


def interpolate(s: SurfaceScalar, zeta: CArray, chart_id: int = 0) -> NDArray:
    """Evaluate a scalar at points given in chart ``chart_id`` coordinates."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    own = np.abs(zeta) <= 1.0
    out = np.empty((len(zeta),) + s.values[0].shape[1:], dtype=np.result_type(*s.values))
    targets = ((chart_id, own, zeta[own]), (1 - chart_id, ~own, other_chart_coords(zeta[~own])))
    for chart, mask, pts in targets:
        if np.any(mask):
            out[mask] = s.grid.charts[chart].interp_matrix(pts) @ s.values[chart]
    return out


def integrate(
    s: SurfaceScalar,
    measure: Literal["round", "flat"] = "round",
    blended: bool = False,
) -> complex | float:
    """Integrate against the round area form (or chart-flat weights).

    ``blended`` uses the smooth partition of unity over the full disks in place
    of the sharp equatorial split; it converges slower and serves as a check.
    """
    total = 0.0 + 0.0j
    for chart, vals in zip(s.grid.charts, s.values):
        weights = chart.colloc_weights * chart.blend if blended else chart.flat_weights
        if measure == "round":
            weights = weights * 4.0 / (1.0 + np.abs(chart.zeta) ** 2) ** 2
        total += np.tensordot(weights, vals, axes=(0, 0))
    if np.isrealobj(s.values[0]) and np.isrealobj(s.values[1]):
        return float(total.real)
    return complex(total)


def round_inner(v1: SurfaceVectorField, v2: SurfaceVectorField) -> float:
    """L^2 product of fields for the round metric 4|dz|^2 / (1 + |z|^2)^2."""
    total = 0.0
    for chart, a, b in zip(v1.grid.charts, v1.values, v2.values):
        conf = 4.0 / (1.0 + np.abs(chart.zeta) ** 2) ** 2
        total += float(np.sum(chart.flat_weights * conf**2 * (a * b.conj()).real))
    return total


def holomorphy_residual(v: SurfaceVectorField) -> float:
    worst = 0.0
    for chart, vals in zip(v.grid.charts, v.values):
        dbar = 0.5 * (chart.dx @ vals + 1j * (chart.dy @ vals))
        worst = max(worst, float(np.abs(dbar).max()))
    return worst
