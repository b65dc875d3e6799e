import logging
from collections import deque
from typing import Any, Callable, Generator, Sequence, TypeVar

from curvelab.globs import get_running_loop
from curvelab.loop import Loop
from curvelab.task import Task

logger = logging.getLogger(__name__)

_J = TypeVar("_J")
_R = TypeVar("_R")


def gather(
    *futures: Generator[Any, Any, Any] | Task[Any, Any],
) -> Generator[None, None, tuple[Task[Any, Any], ...]]:
    """Run all generators to completion, returning their finished tasks in order."""
    loop = get_running_loop()
    tasks = [loop.create_task(future, i) for i, future in enumerate(futures)]
    pending = list(tasks)
    while pending:
        pending = [task for task in pending if not task.done()]
        if pending:
            yield
    return tuple(tasks)


def map_jobs(
    fn: Callable[[int, _J], Generator[Any, Any, _R]],
    jobs: Sequence[_J],
    workers: int = 1,
) -> list[Task[Any, _R]]:
    """Evaluate ``fn(index, job)`` for every job with at most ``workers`` alive.

    Each worker pulls the next job index from a shared queue; results are
    returned ordered by job index, so they do not depend on ``workers``.
    """
    queue: deque[int] = deque(range(len(jobs)))
    finished: dict[int, Task[Any, _R]] = {}

    def record(task: Task[Any, _R]) -> None:
        finished[task.job_index] = task
        logger.debug(
            "Job %d %s after %d steps (%d/%d)",
            task.job_index,
            task.status,
            task.steps,
            len(finished),
            len(jobs),
        )

    def worker() -> Generator[None, None, None]:
        loop = get_running_loop()
        while queue:
            index = queue.popleft()
            task = loop.create_task(fn(index, jobs[index]), index)
            task.add_done_callback(record)
            while not task.done():
                yield

    def main() -> Generator[None, None, None]:
        yield from gather(*[worker() for _ in range(max(1, workers))])

    run(main())
    return [finished[i] for i in range(len(jobs))]


def run(coro: Generator[Any, Any, _R] | Task[Any, _R]) -> _R | None:
    return Loop().run_until_complete(coro)
