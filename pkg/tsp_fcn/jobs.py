from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List


def map_jobs(fn: Callable, items: Iterable, jobs: int = 1) -> List:
    """
    ordered map over items; jobs > 1 fans out to worker processes

    fn and items must be picklable when jobs > 1
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
