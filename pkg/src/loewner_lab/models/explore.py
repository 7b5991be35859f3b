"""Interface exploration on the triangular lattice (percolation, harmonic explorer).

The interface walks on the hexagonal dual, i.e. through centroids of lattice
triangles.  It keeps an open site L on its left and a closed site R on its
right; the third corner X of the next triangle decides the turn.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..geometry import Curve, InvalidInput
from ..lattice import AXIAL_DIRS, DiscreteDomain, solve_dirichlet

_DIRS = np.array(AXIAL_DIRS, dtype=np.int64)

DONE = 0
NEED_COLOR = 1
STUCK = 2


@njit(cache=True)
def _dir_index(di, dj, dirs):
    for k in range(6):
        if dirs[k, 0] == di and dirs[k, 1] == dj:
            return k
    return -1


@njit(cache=True)
def _run(ax, lut, i0, j0, dirs, colors, state, end_l, end_r, tri_out, n_out):
    # state = [L, R, prev_i, prev_j]; returns (status, n_out, X)
    L, R, pi, pj = state[0], state[1], state[2], state[3]
    while True:
        if L == end_l and R == end_r and n_out > 0:
            state[0], state[1], state[2], state[3] = L, R, pi, pj
            return DONE, n_out, -1
        k = _dir_index(ax[R, 0] - ax[L, 0], ax[R, 1] - ax[L, 1], dirs)
        ci = ax[L, 0] + dirs[(k + 1) % 6, 0]
        cj = ax[L, 1] + dirs[(k + 1) % 6, 1]
        if ci == pi and cj == pj:
            ci = ax[L, 0] + dirs[(k + 5) % 6, 0]
            cj = ax[L, 1] + dirs[(k + 5) % 6, 1]
        ii = ci - i0
        jj = cj - j0
        X = -1
        if 0 <= ii < lut.shape[0] and 0 <= jj < lut.shape[1]:
            X = lut[ii, jj]
        if X < 0:
            state[0], state[1], state[2], state[3] = L, R, pi, pj
            return STUCK, n_out, -1
        if colors[X] < 0:
            state[0], state[1], state[2], state[3] = L, R, pi, pj
            return NEED_COLOR, n_out, X
        tri_out[n_out, 0] = L
        tri_out[n_out, 1] = R
        tri_out[n_out, 2] = X
        n_out += 1
        if n_out >= tri_out.shape[0]:
            state[0], state[1], state[2], state[3] = L, R, pi, pj
            return STUCK, n_out, -1
        if colors[X] == 1:
            pi = ax[L, 0]
            pj = ax[L, 1]
            L = X
        else:
            pi = ax[R, 0]
            pj = ax[R, 1]
            R = X


class Explorer:
    """Resumable exploration; unknown colors are requested one at a time."""

    def __init__(self, d: DiscreteDomain, colors=None):
        if d.kind != "triangular":
            raise InvalidInput("exploration needs a triangular-lattice domain")
        self.d = d
        if colors is None:
            colors = np.full(d.n_sites, -1, dtype=np.int8)
            colors[d.arc1] = 1
            colors[d.arc2] = 0
        self.colors = np.asarray(colors, dtype=np.int8).copy()
        ax = d.meta["axial"]
        self.ax = ax
        self.lut, (self.i0, self.j0) = d.meta["lookup_array"]
        L, R = int(d.arc1[0]), int(d.arc2[0])
        # the previous corner is the one outside the domain, behind a
        k = AXIAL_DIRS.index(tuple(ax[R] - ax[L]))
        outside = None
        for s in (1, 5):
            c = ax[L] + _DIRS[(k + s) % 6]
            if c[0] - self.i0 < 0 or c[1] - self.j0 < 0 or c[0] - self.i0 >= self.lut.shape[0] \
                    or c[1] - self.j0 >= self.lut.shape[1] or self.lut[c[0] - self.i0, c[1] - self.j0] < 0:
                outside = c
        self.state = np.array([L, R, outside[0], outside[1]], dtype=np.int64)
        self.tri = np.empty((4 * d.n_sites + 8, 3), dtype=np.int64)
        self.n = 0
        self.end = (int(d.arc1[-1]), int(d.arc2[-1]))

    def run(self):
        """Advance until done (returns -1) or an unknown site is ahead (returns it)."""
        status, self.n, X = _run(self.ax, self.lut, self.i0, self.j0, _DIRS, self.colors, self.state,
                                 self.end[0], self.end[1], self.tri, self.n)
        if status == STUCK:
            raise InvalidInput("exploration left the domain: boundary arcs are not admissible")
        return int(X) if status == NEED_COLOR else -1

    def triangles(self) -> np.ndarray:
        return self.tri[: self.n].copy()

    def points(self) -> np.ndarray:
        xy = self.d.coords
        t = self.tri[: self.n]
        cent = (xy[t[:, 0]] + xy[t[:, 1]] + xy[t[:, 2]]) / 3.0
        a = np.array([[self.d.a.real, self.d.a.imag]])
        b = np.array([[self.d.b.real, self.d.b.imag]])
        return np.concatenate([a, cent, b])


def percolation_colors(d: DiscreteDomain, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    colors = (rng.random(d.n_sites) < p).astype(np.int8)
    colors[d.arc1] = 1
    colors[d.arc2] = 0
    return colors


def explore_percolation(d: DiscreteDomain, colors) -> Explorer:
    ex = Explorer(d, colors)
    if ex.run() != -1:
        raise InvalidInput("coloring is incomplete")
    return ex


def harmonic_probability(d: DiscreteDomain, colors, site: int, x0=None):
    """H at `site` with value 1 on open and 0 on closed sites, unknown sites free."""
    free = colors < 0
    vals, _ = solve_dirichlet(d.indptr, d.indices, free, colors.astype(float), x0=x0)
    return float(vals[site]), vals


def explore_harmonic(d: DiscreteDomain, rng: np.random.Generator, colors=None) -> Explorer:
    ex = Explorer(d, colors)
    prev = None
    while True:
        X = ex.run()
        if X < 0:
            return ex
        p, vals = harmonic_probability(d, ex.colors, X, x0=prev)
        ex.colors[X] = 1 if rng.random() < p else 0
        prev = vals


def exact_interface_law(d: DiscreteDomain, model: str, colors=None) -> dict:
    """Law of the triangle sequence by branching on every revealed site.

    Percolation reveals each unknown site with probability 1/2; the harmonic
    explorer with the harmonic measure of the open set.  Exponential in the
    number of revealed sites, so only for tiny domains.
    """
    law = {}

    def rec(colors, prob):
        ex = Explorer(d, colors)
        X = ex.run()
        if X < 0:
            key = tuple(map(tuple, ex.triangles().tolist()))
            law[key] = law.get(key, 0.0) + prob
            return
        if model == "percolation":
            p = 0.5
        else:
            p, _ = harmonic_probability(d, ex.colors, X)
        for c, w in ((1, p), (0, 1 - p)):
            if w > 0:
                nxt = ex.colors.copy()
                nxt[X] = c
                rec(nxt, prob * w)

    if colors is None:
        colors = np.full(d.n_sites, -1, dtype=np.int8)
        colors[d.arc1] = 1
        colors[d.arc2] = 0
    rec(np.asarray(colors, dtype=np.int8), 1.0)
    return law


def to_curve(ex: Explorer, model: str, seed: int) -> Curve:
    return Curve(ex.points(), {"model": model, "seed": int(seed), "spacing": ex.d.spacing})
