"""Ordered parallel map used by the per-point studies."""

import os
from concurrent.futures import ThreadPoolExecutor


def default_jobs() -> int:
    return int(os.environ.get("SOBOLEV_LAB_JOBS", "1"))


def pmap(fn, items, jobs=None):
    items = list(items)
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
