"""Client pool: runs one callable per client, sequentially or on a thread pool.

Results always come back in client order, so the aggregation barrier sees
the same sequence regardless of the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from config.settings import settings
from shared.errors import DivergedError

logger = logging.getLogger(__name__)

C = TypeVar("C")
R = TypeVar("R")


class ClientPool:
    """Same interface for 1 or many workers: map(fn, clients) -> results in client order."""

    def __init__(self, workers: int = settings.workers):
        self.workers = max(1, int(workers))

    def map(self, fn: Callable[[C], R], clients: Sequence[C]) -> list[R]:
        if self.workers == 1 or len(clients) <= 1:
            return [fn(c) for c in clients]

        with ThreadPoolExecutor(max_workers=min(self.workers, len(clients))) as executor:
            futures = [executor.submit(fn, c) for c in clients]
            results, first_error = [], None
            for i, future in enumerate(futures):
                try:
                    results.append(future.result())
                except Exception as e:
                    if first_error is None:
                        first_error = e
                    if not isinstance(e, DivergedError):
                        logger.error(f"❌ Client task {i} failed: {e}")
        if first_error is not None:
            raise first_error
        return results
