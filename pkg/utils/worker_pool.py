import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List

logger = logging.getLogger(__name__)


class Worker:
    """Wraps a callable so a pool can run it and keep its outcome."""

    def __init__(self, fn, *args, **kwargs):
        self.fn = fn
        self.args = args
        self.kwargs = kwargs
        self.result: Any = None
        self.error: Exception | None = None

    def run(self) -> "Worker":
        try:
            self.result = self.fn(*self.args, **self.kwargs)
        except Exception as e:
            logger.debug(f"Worker {getattr(self.fn, '__name__', self.fn)} failed: {e}")
            self.error = e
        return self


def run_ordered(fn: Callable[[Any], Any], items: Iterable[Any], jobs: int = 1) -> List[Any]:
    """Apply ``fn`` to every item and return results in input order.

    With ``jobs > 1`` the items run on a thread pool. The first captured error
    is re-raised after all workers finish.
    """
    workers = [Worker(fn, item) for item in items]
    if jobs <= 1 or len(workers) <= 1:
        for w in workers:
            w.run()
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            list(ex.map(Worker.run, workers))

    for w in workers:
        if w.error is not None:
            logger.error(f"Parallel task failed: {w.error}")
            raise w.error
    return [w.result for w in workers]
