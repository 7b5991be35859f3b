"""FK-Ising and UST on a square box with a wired bottom row.

Vertices are (x, y) in {0..m} x {0..n}, index x*(n+1) + y.  Edges are listed
horizontal first ((x,y)-(x+1,y), x-major) then vertical ((x,y)-(x,y+1)).  The
bottom row is the wired arc; the rest of the boundary is free.

Both interfaces are contours on the fine lattice v + (+-1/4, +-1/4): a fine
segment either runs parallel to a primal edge (allowed when the edge is
open) or cuts across it next to an endpoint (allowed when it is closed).
Every fine point then has exactly two moves, so the contours are disjoint
loops.  The loop through the points under the wired row, with those points
removed, runs from near a = (-1/4, 0) to near b = (m + 1/4, 0) and keeps the
wired cluster on its right.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from numba import njit

from ..geometry import Curve, InvalidInput
from ..lattice import DiscreteDomain, EdgeConfig

P_SD_ISING = math.sqrt(2.0) / (1.0 + math.sqrt(2.0))


def box_edges(m: int, n: int):
    idx = lambda x, y: x * (n + 1) + y
    h = [(idx(x, y), idx(x + 1, y)) for x in range(m) for y in range(n + 1)]
    v = [(idx(x, y), idx(x, y + 1)) for x in range(m + 1) for y in range(n)]
    edges = np.array(h + v, dtype=np.int64).reshape(-1, 2)
    wired = np.zeros(len(edges), dtype=bool)
    wired[[x * (n + 1) for x in range(m)]] = True  # horizontal edges with y = 0
    return edges, wired


def split_open(open_, m: int, n: int):
    nh = m * (n + 1)
    hopen = np.asarray(open_[:nh], dtype=bool).reshape(m, n + 1)
    vopen = np.asarray(open_[nh:], dtype=bool).reshape(m + 1, n)
    return hopen, vopen


def _box_size(d: DiscreteDomain):
    if d.kind != "square" or "m" not in d.meta:
        raise InvalidInput("expected a square box domain")
    return d.meta["m"], d.meta["n"]


# ---------------------------------------------------------------- contour


def contour(hopen: np.ndarray, vopen: np.ndarray) -> np.ndarray:
    """Fine-lattice contour around the cluster of the bottom row."""
    m = hopen.shape[0]
    n = vopen.shape[1]

    def h_open(x, y, sx):
        xx = x if sx > 0 else x - 1
        return 0 <= xx < m and hopen[xx, y]

    def v_open(x, y, sy):
        yy = y if sy > 0 else y - 1
        return 0 <= yy < n and vopen[x, yy]

    def moves(q):
        x, y, sx, sy = q
        a = (x + sx, y, -sx, sy) if h_open(x, y, sx) else (x, y, sx, -sy)
        b = (x, y + sy, sx, -sy) if v_open(x, y, sy) else (x, y, -sx, sy)
        return a, b

    def below(q):
        return q[1] == 0 and q[3] < 0

    prev = (0, 0, -1, -1)
    cur = (0, 0, -1, 1)
    out = [cur]
    limit = 4 * (m + 1) * (n + 1) + 4
    while True:
        a, b = moves(cur)
        nxt = b if a == prev else a
        if below(nxt):
            break
        prev, cur = cur, nxt
        out.append(cur)
        if len(out) > limit:
            raise RuntimeError("contour did not close")
    q = np.array(out, dtype=float)
    return np.column_stack([q[:, 0] + q[:, 2] / 4, q[:, 1] + q[:, 3] / 4])


def _with_ends(pts, m):
    return np.concatenate([[[-0.25, 0.0]], pts, [[m + 0.25, 0.0]]])


# ---------------------------------------------------------------- FK heat bath


@njit(cache=True)
def _connected_without(u, v, skip, adj_ptr, adj_v, adj_e, open_, mark, stamp, qa, qb):
    # bidirectional BFS over open edges except `skip`; stops as soon as one
    # side runs out or the two searches meet
    if u == v:
        return True
    sa = 2 * stamp
    sb = 2 * stamp + 1
    mark[u] = sa
    mark[v] = sb
    ha, ta, hb, tb = 0, 1, 0, 1
    qa[0] = u
    qb[0] = v
    while ha < ta and hb < tb:
        if ta - ha <= tb - hb:
            x = qa[ha]
            ha += 1
            for k in range(adj_ptr[x], adj_ptr[x + 1]):
                e = adj_e[k]
                if e == skip or open_[e] == 0:
                    continue
                y = adj_v[k]
                if mark[y] == sb:
                    return True
                if mark[y] != sa:
                    mark[y] = sa
                    qa[ta] = y
                    ta += 1
        else:
            x = qb[hb]
            hb += 1
            for k in range(adj_ptr[x], adj_ptr[x + 1]):
                e = adj_e[k]
                if e == skip or open_[e] == 0:
                    continue
                y = adj_v[k]
                if mark[y] == sa:
                    return True
                if mark[y] != sb:
                    mark[y] = sb
                    qb[tb] = y
                    tb += 1
    return False


@njit(cache=True)
def _sweeps(eu, ev, fixed, adj_ptr, adj_v, adj_e, open_, p_conn, p_free, uniforms, codes, mark, stamp0):
    E = eu.shape[0]
    nv = adj_ptr.shape[0] - 1
    qa = np.empty(nv, dtype=np.int64)
    qb = np.empty(nv, dtype=np.int64)
    stamp = stamp0
    for s in range(uniforms.shape[0]):
        for e in range(E):
            if fixed[e]:
                continue
            stamp += 1
            conn = _connected_without(eu[e], ev[e], e, adj_ptr, adj_v, adj_e, open_, mark, stamp, qa, qb)
            pe = p_conn if conn else p_free
            open_[e] = 1 if uniforms[s, e] < pe else 0
        if codes.shape[0] > 0:
            c = 0
            for e in range(E):
                if open_[e]:
                    c |= 1 << e
            codes[s] = c
    return stamp


class HeatBath:
    """Single-edge heat bath for the random-cluster measure on an EdgeConfig.

    Given the rest, edge e opens with probability p if its endpoints are
    already connected and p / (p + (1-p) q) otherwise.  One sweep visits every
    non-wired edge once in a fixed order.
    """

    def __init__(self, cfg: EdgeConfig, p: float, q: float):
        if not 0 < p < 1 or q <= 0:
            raise InvalidInput("need 0 < p < 1 and q > 0")
        self.cfg = cfg
        self.p_conn = p
        self.p_free = p / (p + (1 - p) * q)
        e = cfg.edges
        nv = cfg.n_vertices
        both = np.concatenate([e, e[:, ::-1]])
        eid = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        order = np.argsort(both[:, 0], kind="stable")
        self.adj_v = both[order, 1].copy()
        self.adj_e = eid[order].copy()
        ptr = np.zeros(nv + 1, dtype=np.int64)
        np.add.at(ptr, both[:, 0] + 1, 1)
        self.adj_ptr = np.cumsum(ptr)
        self.state = cfg.open.astype(np.uint8)
        self.state[cfg.wired] = 1
        self.fixed = cfg.wired.astype(np.uint8)
        self.mark = np.full(nv, -1, dtype=np.int64)
        self.stamp = 0

    def run(self, sweeps: int, rng: np.random.Generator, record: bool = False, chunk: int = 4096):
        E = len(self.cfg.edges)
        if record and E > 62:
            raise InvalidInput("state codes need at most 62 edges")
        out = []
        done = 0
        while done < sweeps:
            k = min(chunk, sweeps - done)
            u = rng.random((k, E))
            codes = np.empty(k if record else 0, dtype=np.int64)
            self.stamp = _sweeps(self.cfg.edges[:, 0], self.cfg.edges[:, 1], self.fixed, self.adj_ptr,
                                 self.adj_v, self.adj_e, self.state, self.p_conn, self.p_free, u, codes,
                                 self.mark, self.stamp)
            out.append(codes)
            done += k
        self.cfg.open = self.state.astype(bool)
        return np.concatenate(out) if record else None


def sample_fk(d: DiscreteDomain, rng: np.random.Generator, seed: int, p: float, q: float, sweeps: int) -> Curve:
    m, n = _box_size(d)
    if sweeps < 1:
        raise InvalidInput("sweeps must be >= 1")
    if q != 2:
        warnings.warn("FK sampling is validated only at q = 2")
    edges, wired = box_edges(m, n)
    start = wired.copy()
    cfg = EdgeConfig((m + 1) * (n + 1), edges, start, wired)
    HeatBath(cfg, p, q).run(sweeps, rng)
    hopen, vopen = split_open(cfg.open, m, n)
    pts = _with_ends(contour(hopen, vopen), m)
    return Curve(pts, {"model": "fk-ising", "seed": int(seed), "spacing": d.spacing})


# ---------------------------------------------------------------- UST


@njit(cache=True)
def _wilson(m, n, seed):
    np.random.seed(seed)
    nv = (m + 1) * (n + 1)
    in_tree = np.zeros(nv, dtype=np.bool_)
    nxt = np.full(nv, -1, dtype=np.int64)
    for x in range(m + 1):
        in_tree[x * (n + 1)] = True
    nb = np.empty(4, dtype=np.int64)
    for s in range(nv):
        u = s
        while not in_tree[u]:
            x = u // (n + 1)
            y = u % (n + 1)
            k = 0
            if x > 0:
                nb[k] = u - (n + 1)
                k += 1
            if x < m:
                nb[k] = u + (n + 1)
                k += 1
            if y > 0:
                nb[k] = u - 1
                k += 1
            if y < n:
                nb[k] = u + 1
                k += 1
            nxt[u] = nb[int(np.random.random() * k)]
            u = nxt[u]
        u = s
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    return nxt


def ust_tree(m: int, n: int, rng: np.random.Generator):
    """Wilson's algorithm rooted at the wired bottom row; returns (hopen, vopen)."""
    nxt = _wilson(m, n, int(rng.integers(0, 2**31 - 1)))
    hopen = np.zeros((m, n + 1), dtype=bool)
    vopen = np.zeros((m + 1, n), dtype=bool)
    hopen[:, 0] = True
    for u, w in enumerate(nxt):
        if w < 0:
            continue
        a, b = min(u, w), max(u, w)
        xa, ya = divmod(a, n + 1)
        xb, yb = divmod(b, n + 1)
        if xa == xb:
            vopen[xa, ya] = True
        else:
            hopen[xa, ya] = True
    return hopen, vopen


def sample_ust(d: DiscreteDomain, rng: np.random.Generator, seed: int) -> Curve:
    m, n = _box_size(d)
    if n == 0:
        raise InvalidInput("wired arc would be the entire boundary")
    hopen, vopen = ust_tree(m, n, rng)
    pts = _with_ends(contour(hopen, vopen), m)
    return Curve(pts, {"model": "ust-peano", "seed": int(seed), "spacing": d.spacing})
