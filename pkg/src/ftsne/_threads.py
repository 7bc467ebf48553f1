import os
from concurrent.futures import ThreadPoolExecutor

_num_threads = None


def set_num_threads(n):
    """Cap worker threads used by the row-block kernels (``None`` resets)."""
    global _num_threads
    if n is not None and int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = None if n is None else int(n)


def get_num_threads():
    if _num_threads is not None:
        return _num_threads
    env = os.environ.get("FTSNE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_blocks(fn, n, min_block=256):
    """Apply ``fn(start, stop)`` over row blocks of ``range(n)``; results in block order."""
    workers = get_num_threads()
    nblocks = max(1, min(workers, -(-n // min_block)))
    bounds = [(n * b // nblocks, n * (b + 1) // nblocks) for b in range(nblocks)]
    if nblocks == 1:
        return [fn(*bounds[0])]
    with ThreadPoolExecutor(max_workers=nblocks) as pool:
        return list(pool.map(lambda se: fn(*se), bounds))
