"""Thread-pool helpers shared by the block scan and the benchmark loop."""

import os
from concurrent.futures import ThreadPoolExecutor

_ENV_VAR = "BLOCKSEL_THREADS"


def thread_count(explicit=None):
    """Resolve the worker count: explicit arg, then BLOCKSEL_THREADS, then CPU count."""
    if explicit is not None:
        n = int(explicit)
    else:
        env = os.environ.get(_ENV_VAR)
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    return n


def parallel_map(fn, items, threads=None):
    """Map ``fn`` over ``items``, preserving order.

    Falls back to a plain loop for a single worker so that stack traces
    stay readable and there is no pool overhead on tiny inputs.
    """
    items = list(items)
    n = min(thread_count(threads), max(len(items), 1))
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
