"""Counter-based random streams keyed by (base_seed, job_index)."""
from __future__ import annotations

import numpy as np


def job_rng(base_seed: int, job_index: int = 0) -> np.random.Generator:
    # SeedSequence hashes the pair; Philox is counter based, so every job
    # gets an independent stream no matter which worker runs it.
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(job_index)])
    return np.random.Generator(np.random.Philox(ss))


def job_seed(base_seed: int, job_index: int) -> int:
    """A derived 63-bit seed, used when a job must record its own seed."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(job_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1
