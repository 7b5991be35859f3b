"""Chordal loop-erased random walk from a to b in a square-lattice box."""
from __future__ import annotations

import numpy as np
from numba import njit

from ..geometry import Curve, InvalidInput
from ..lattice import ConditioningError, DiscreteDomain, HarmonicField, harmonic_solve, random_walk


@njit(cache=True)
def _loop_erase(path, n_sites):
    pos = np.full(n_sites, -1, dtype=np.int64)
    out = np.empty_like(path)
    k = 0
    for v in path:
        j = pos[v]
        if j >= 0:
            for t in range(j + 1, k):
                pos[out[t]] = -1
            k = j + 1
        else:
            out[k] = v
            pos[v] = k
            k += 1
    return out[:k].copy()


def loop_erase(path) -> list:
    """Chronological loop erasure: erase each loop as soon as it closes."""
    arr = np.asarray(path)
    if arr.ndim != 1 or arr.dtype.kind not in "iu":
        # arbitrary hashable items
        out, where = [], {}
        for v in path:
            if v in where:
                for w in out[where[v] + 1:]:
                    del where[w]
                out = out[: where[v] + 1]
            else:
                where[v] = len(out)
                out.append(v)
        return out
    if arr.size == 0:
        return []
    lo = int(arr.min())
    return (_loop_erase(arr.astype(np.int64) - lo, int(arr.max()) - lo + 1) + lo).tolist()


def lerw_harmonic(d: DiscreteDomain) -> HarmonicField:
    if d.kind != "square":
        raise InvalidInput("LERW runs on square-lattice domains")
    h = harmonic_solve(d)
    a = d.meta["a_index"]
    if h.values[d.neighbors(a)].max(initial=0.0) <= 0:
        raise ConditioningError("b is unreachable from a")
    return h


def lerw_path(d: DiscreteDomain, rng: np.random.Generator, h: HarmonicField | None = None) -> np.ndarray:
    """Site indices of the loop erasure of the h-transformed walk from a to b."""
    if h is None:
        h = lerw_harmonic(d)
    walk = random_walk(d, d.meta["a_index"], h, rng)
    if walk[-1] != d.meta["b_index"]:
        raise ConditioningError("walk did not exit at b")
    return np.asarray(loop_erase(walk), dtype=np.int64)


def sample(d: DiscreteDomain, rng: np.random.Generator, seed: int, h=None) -> Curve:
    path = lerw_path(d, rng, h)
    return Curve(d.coords[path], {"model": "lerw", "seed": int(seed), "spacing": d.spacing})
