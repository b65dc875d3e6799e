import logging
from typing import Any, Generator, TypeVar

from curvelab.exceptions import SampleCancelledError
from curvelab.globs import set_running_loop
from curvelab.task import Task

logger = logging.getLogger(__name__)

_G = TypeVar("_G")
_R = TypeVar("_R")


class Loop:
    """Round-robin driver for sample generators.

    Tasks advance in admission order, one step per tick, so a run is
    reproducible whatever the number of tasks alive at once.
    """

    def __init__(self) -> None:
        self.active: list[Task[Any, Any]] = []
        self.admitted: list[Task[Any, Any]] = []
        self.ticks = 0
        self.completed = 0

    def _admit(self) -> None:
        self.active.extend(self.admitted)
        self.admitted = []

    def _step(self, task: Task[Any, Any]) -> bool:
        """Advance ``task`` once; True when it has finished or failed."""
        try:
            next(task)
        except StopIteration as stop:
            task.set_result(stop.value)
            task.set_done()
            return True
        except Exception as exc:
            logger.debug("Sample task %r failed: %s", task, exc)
            task.set_error(exc)
            return True
        return False

    def tick(self) -> list[Task[Any, Any]]:
        """Advance every active task once and retire the ones that ended."""
        self._admit()
        self.ticks += 1
        ended = [task for task in list(self.active) if self._step(task)]
        for task in ended:
            self.active.remove(task)
            for callback in task.callbacks:
                callback(task)
        self.completed += len(ended)
        return ended

    def create_task(
        self, task: Generator[_G, Any, _R] | Task[_G, _R], job_index: int = -1
    ) -> Task[_G, _R]:
        wrapped = task if isinstance(task, Task) else Task(task, job_index)
        self.admitted.append(wrapped)
        return wrapped

    def cancel_all(self) -> None:
        for task in self.active + self.admitted:
            try:
                task.cancel()
            except (SampleCancelledError, StopIteration):
                pass
        self.active.clear()
        self.admitted.clear()

    def run_until_complete(
        self, task: Generator[_G, Any, _R] | Task[_G, _R]
    ) -> _R | None:
        outer = set_running_loop(self)
        try:
            main = self.create_task(task)
            while not main.done():
                self.tick()
            self.cancel_all()
            logger.debug("Loop finished after %d ticks, %d tasks", self.ticks, self.completed)
            if main.error is not None:
                raise main.error
            return main.result
        finally:
            set_running_loop(outer)
