"""
Orbimag — Job Fan-out
Ordered parallel map over independent jobs (k-points, R-points, b-probes).
"""

import logging
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = None  # Let the executor pick (min(32, cpu + 4))


def map_ordered(fn, items, workers: int | None = DEFAULT_WORKERS) -> list:
    """Apply fn to every item, returning results in input order.

    Args:
        fn: Callable of one argument.
        items: Iterable of job inputs.
        workers: Thread count. 1 runs a plain loop (bitwise reproducible).

    Returns:
        List of results, same order as items.
    """
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("fanning out %d jobs over %s workers", len(items), workers or "auto")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
