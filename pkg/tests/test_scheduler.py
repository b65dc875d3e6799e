from typing import Any, Generator

import pytest

from curvelab import Task, gather, get_running_loop, map_jobs, run


def _count(n: int, value: Any) -> Generator[None, None, Any]:
    for _ in range(n):
        yield
    return value


def _fail(n: int) -> Generator[None, None, None]:
    for _ in range(n):
        yield
    raise ValueError("boom")


def test_run_returns_result() -> None:
    assert run(_count(3, 42)) == 42


def test_run_raises_task_error() -> None:
    with pytest.raises(ValueError, match="boom"):
        run(_fail(2))


def test_no_loop_outside_run() -> None:
    with pytest.raises(RuntimeError):
        get_running_loop()


def test_gather_keeps_argument_order() -> None:
    def main() -> Generator[None, None, list[Any]]:
        tasks = yield from gather(_count(5, "slow"), _count(0, "fast"), _fail(1))
        return [(t.result, t.status) for t in tasks]

    assert run(main()) == [("slow", "finished"), ("fast", "finished"), (None, "failed")]


def test_unfinished_tasks_are_cancelled() -> None:
    holder: list[Task[Any, Any]] = []

    def main() -> Generator[None, None, str]:
        holder.append(get_running_loop().create_task(_count(100, None)))
        yield
        yield
        return "done"

    assert run(main()) == "done"
    assert holder[0].status == "cancelled"


@pytest.mark.parametrize("workers", [1, 2, 5])
def test_map_jobs_is_ordered(workers: int) -> None:
    def job(index: int, n: int) -> Generator[None, None, int]:
        yield from _count(n, None)
        if index == 3:
            raise ValueError("bad job")
        return index * 10

    tasks = map_jobs(job, [4, 1, 3, 0, 2, 5], workers)
    assert [t.job_index for t in tasks] == list(range(6))
    assert [t.result for t in tasks] == [0, 10, 20, None, 40, 50]
    assert isinstance(tasks[3].error, ValueError)


@pytest.mark.parametrize("workers", [1, 3])
def test_map_jobs_limits_workers(workers: int) -> None:
    alive = [0]
    peak = [0]

    def job(index: int, n: int) -> Generator[None, None, int]:
        alive[0] += 1
        peak[0] = max(peak[0], alive[0])
        yield from _count(n, None)
        alive[0] -= 1
        return n

    map_jobs(job, [3] * 7, workers)
    assert peak[0] == workers


def test_map_jobs_without_jobs() -> None:
    assert map_jobs(lambda i, j: _count(0, j), []) == []


def test_nested_runs_restore_the_outer_loop() -> None:
    def main() -> Generator[None, None, bool]:
        outer = get_running_loop()
        inner = map_jobs(lambda i, n: _count(n, i), [1, 2])
        yield
        return [t.result for t in inner] == [0, 1] and get_running_loop() is outer

    assert run(main()) is True
