"""Deterministic fan-out of seed-indexed jobs over a process pool."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(default: int = 1) -> int:
    v = os.environ.get("LOEWNER_LAB_WORKERS")
    if not v:
        return default
    try:
        n = int(v)
    except ValueError:
        raise ValueError(f"LOEWNER_LAB_WORKERS must be an integer, got {v!r}")
    return max(1, n)


def run_jobs(fn, jobs, workers: int | None = None, chunks: int | None = None) -> list:
    """fn(job) for every job, results in job order whatever the pool size."""
    jobs = list(jobs)
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // ((chunks or 4) * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))
