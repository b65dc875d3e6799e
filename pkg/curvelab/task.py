from typing import Any, Callable, Generator, Literal

from curvelab.exceptions import SampleCancelledError

Status = Literal["pending", "finished", "failed", "cancelled"]


class Task[_G, _R]:
    """A sample evaluation driven step by step by the loop.

    The wrapped generator yields between expensive stages (solve, frame,
    tangent estimation) so that several samples advance in turn.
    """

    def __init__(self, gen: Generator[_G, Any, _R], job_index: int = -1) -> None:
        self.gen = gen
        self.job_index = job_index
        self.status: Status = "pending"
        self.callbacks: list[Callable[[Task[_G, _R]], None]] = []
        self.result: _R | None = None
        self.error: BaseException | None = None
        self.steps = 0

    def __iter__(self) -> "Task[_G, _R]":
        return self

    def __next__(self) -> _G:
        self.steps += 1
        return next(self.gen)

    def set_result(self, result: _R) -> None:
        self.result = result

    def set_error(self, error: BaseException) -> None:
        self.error = error
        self.status = "failed"

    def set_done(self) -> None:
        if self.status == "pending":
            self.status = "finished"

    def done(self) -> bool:
        return self.status != "pending"

    def cancel(self) -> None:
        """Mark cancelled and unwind the generator with SampleCancelledError."""
        self.status = "cancelled"
        self.gen.throw(SampleCancelledError())

    def add_done_callback(self, callback: "Callable[[Task[_G, _R]], None]") -> None:
        self.callbacks.append(callback)

    def __repr__(self) -> str:
        return f"<Task job={self.job_index} {self.status} steps={self.steps}>"
