from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from curvelab.loop import Loop

_current: "Loop | None" = None


def get_running_loop() -> "Loop":
    if _current is None:
        raise RuntimeError("No running sample loop")
    return _current


def set_running_loop(loop: "Loop | None") -> "Loop | None":
    """Install ``loop`` and return the one it replaces."""
    global _current
    previous, _current = _current, loop
    return previous
