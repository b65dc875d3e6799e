class CurveLabError(Exception):
    """Base class for every failure raised by curvelab."""


class InvalidInputError(CurveLabError):
    """Arguments do not fit together (dimensions, grids, charts)."""


class ConfigError(CurveLabError):
    """Configuration value out of bounds or unresolvable."""


class NumericalConfigError(CurveLabError):
    """A numerical parameter (usually a finite-difference step) is unusable."""


class DecompositionError(CurveLabError):
    """Polar decomposition impossible: singular form or non-SPD metric."""


class PathOutOfRangeError(CurveLabError):
    """The perturbed metric g + lam*h stopped being positive definite."""

    def __init__(self, lam: float, min_eig: float) -> None:
        self.lam = lam
        self.min_eig = min_eig
        super().__init__(
            f"g + lam*h is not SPD at lam={lam:g} (min eigenvalue {min_eig:.3e}); "
            "shrink the perturbation"
        )


class NotImmersedError(CurveLabError):
    """The map is not an immersion with symplectic pullback."""


class NoConvergenceError(CurveLabError):
    def __init__(self, iterations: int, residual: float, detail: str = "") -> None:
        self.iterations = iterations
        self.residual = residual
        msg = (
            f"Gauss-Newton did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        super().__init__(f"{msg}: {detail}" if detail else msg)


class NotAtZeroError(CurveLabError):
    """The vertical differential is only defined at zeros of dbar."""


class NonRegularPointError(CurveLabError):
    """No clear singular-value gap separates the kernel."""


class NonSymplecticFrameError(CurveLabError):
    """The restricted form is degenerate on the quotient basis."""


class UnknownClassError(CurveLabError, KeyError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"Unknown homology class: {name}")


class SampleRejectedError(CurveLabError):
    """A moduli sample could not be evaluated."""


class SampleCancelledError(BaseException):
    """Exception raised when a scheduled sample generator is cancelled."""
