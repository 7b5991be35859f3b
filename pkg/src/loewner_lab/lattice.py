"""Lattice domains, discrete harmonic functions, cluster counts and walks.

A DiscreteDomain is a finite graph with planar coordinates.  Boundary sites
carry boundary values; the remaining sites are interior.  Triangular-lattice
domains use axial coordinates (i, j) with position i + j/2, j*sqrt(3)/2; each
site owns the hexagon of points closer to it than to any other site.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .geometry import InvalidInput

SQ3 = math.sqrt(3.0)
# axial directions in counterclockwise order
AXIAL_DIRS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
SQUARE_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class ConditioningError(RuntimeError):
    pass


def axial_to_xy(ij) -> np.ndarray:
    ij = np.asarray(ij, dtype=float).reshape(-1, 2)
    return np.column_stack([ij[:, 0] + 0.5 * ij[:, 1], ij[:, 1] * SQ3 / 2])


def xy_to_axial(xy) -> np.ndarray:
    """Nearest triangular-lattice site (cube rounding)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    j = xy[:, 1] * 2 / SQ3
    i = xy[:, 0] - 0.5 * j
    k = -i - j
    ri, rj, rk = np.round(i), np.round(j), np.round(k)
    di, dj, dk = np.abs(ri - i), np.abs(rj - j), np.abs(rk - k)
    fix_i = (di > dj) & (di > dk)
    fix_j = ~fix_i & (dj > dk)
    ri = np.where(fix_i, -rj - rk, ri)
    rj = np.where(fix_j, -ri - rk, rj)
    return np.column_stack([ri, rj]).astype(np.int64)


@dataclass
class DiscreteDomain:
    kind: str
    coords: np.ndarray  # (N, 2) positions
    indptr: np.ndarray
    indices: np.ndarray
    boundary: np.ndarray  # bool (N,)
    arc1: np.ndarray  # site indices, V1
    arc2: np.ndarray  # site indices, V2
    a: complex
    b: complex
    spacing: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(len(self.indices))
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n_sites, self.n_sites))

    # region membership, used for rasters in the conditions module
    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if self.kind == "triangular":
            return _lookup_many(self, xy_to_axial(xy)) >= 0
        x0, y0, x1, y1 = self.meta["region"]
        return (xy[:, 0] > x0) & (xy[:, 0] < x1) & (xy[:, 1] > y0) & (xy[:, 1] < y1)

    def polygon(self):
        if "_polygon" not in self.meta:
            from shapely import box, union_all
            from shapely.geometry import Polygon

            if self.kind == "triangular":
                r = 1 / SQ3
                ang = np.pi / 6 + np.arange(6) * np.pi / 3
                hexes = [Polygon(np.column_stack([x + r * np.cos(ang), y + r * np.sin(ang)]))
                         for x, y in self.coords]
                poly = union_all(hexes).buffer(1e-9).buffer(-1e-9)
            else:
                poly = box(*self.meta["region"])
            self.meta["_polygon"] = poly
        return self.meta["_polygon"]

    def bbox(self):
        return self.polygon().bounds

    def to_json(self) -> str:
        spec = self.meta.get("spec")
        if spec is None:
            raise InvalidInput("domain was not built from a spec")
        return json.dumps(spec, sort_keys=True)


def _lookup_many(d: DiscreteDomain, ax: np.ndarray) -> np.ndarray:
    arr, (i0, j0) = d.meta["lookup_array"]
    i = ax[:, 0] - i0
    j = ax[:, 1] - j0
    ok = (i >= 0) & (j >= 0) & (i < arr.shape[0]) & (j < arr.shape[1])
    out = np.full(len(ax), -1, dtype=np.int64)
    out[ok] = arr[i[ok], j[ok]]
    return out


def _csr(n, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    both = np.concatenate([pairs, pairs[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    return np.cumsum(indptr), both[:, 1].copy()


def triangular_domain(sites, arc1, arc2, spec=None) -> DiscreteDomain:
    """Domain on the triangular lattice from axial sites and two boundary arcs.

    arc1 and arc2 are site lists; arc1[0] ~ arc2[0] is the edge at a and
    arc1[-1] ~ arc2[-1] the edge at b.  All other listed sites are interior.
    """
    sites = [tuple(map(int, s)) for s in sites]
    arc1 = [tuple(map(int, s)) for s in arc1]
    arc2 = [tuple(map(int, s)) for s in arc2]
    allsites = list(dict.fromkeys(sites + arc1 + arc2))
    lut = {s: k for k, s in enumerate(allsites)}
    if set(arc1) & set(arc2):
        raise InvalidInput("boundary arcs overlap")
    pairs = []
    for s, k in lut.items():
        for di, dj in AXIAL_DIRS:
            t = (s[0] + di, s[1] + dj)
            if t in lut and lut[t] > k:
                pairs.append((k, lut[t]))
    n = len(allsites)
    indptr, indices = _csr(n, pairs)
    bnd = np.zeros(n, dtype=bool)
    a1 = np.array([lut[s] for s in arc1], dtype=np.int64)
    a2 = np.array([lut[s] for s in arc2], dtype=np.int64)
    bnd[a1] = True
    bnd[a2] = True
    for arc in (arc1, arc2):
        for p, q in zip(arc, arc[1:]):
            if (q[0] - p[0], q[1] - p[1]) not in AXIAL_DIRS:
                raise InvalidInput(f"boundary arc is not a lattice path at {p} -> {q}")
    ax = np.array(allsites, dtype=np.int64)
    i0, j0 = ax.min(axis=0)
    arr = -np.ones(tuple(ax.max(axis=0) - (i0, j0) + 1), dtype=np.int64)
    arr[ax[:, 0] - i0, ax[:, 1] - j0] = np.arange(n)
    meta = {"axial": ax, "lookup": lut, "lookup_array": (arr, (i0, j0)), "spec": spec}
    a = _outer_corner(lut, arc1[0], arc2[0])
    b = _outer_corner(lut, arc1[-1], arc2[-1])
    return DiscreteDomain("triangular", axial_to_xy(ax), indptr, indices, bnd, a1, a2, a, b, 1.0, meta)


def _outer_corner(lut, p, q) -> complex:
    d = (q[0] - p[0], q[1] - p[1])
    if d not in AXIAL_DIRS:
        raise InvalidInput(f"arc ends {p}, {q} are not adjacent")
    k = AXIAL_DIRS.index(d)
    cands = [(p[0] + AXIAL_DIRS[(k + s) % 6][0], p[1] + AXIAL_DIRS[(k + s) % 6][1]) for s in (1, -1)]
    outside = [c for c in cands if c not in lut]
    if len(outside) != 1:
        raise InvalidInput("marked edge must have exactly one side outside the domain")
    tri = axial_to_xy([p, q, outside[0]])
    c = tri.mean(axis=0)
    return complex(c[0], c[1])


def triangular_rhombus(n: int) -> DiscreteDomain:
    """n x n rhombus of sites; a at the (0,0) corner, b at the (n-1,n-1) corner.

    V2 (closed) is the bottom row and right column, V1 (open) the left column
    and top row.  The rhombus is symmetric under the reflection across its
    a-b diagonal, which swaps the two arcs.
    """
    if n < 3:
        raise InvalidInput("rhombus needs n >= 3")
    arc2 = [(i, 0) for i in range(n)] + [(n - 1, j) for j in range(1, n)]
    arc1 = [(0, j) for j in range(1, n)] + [(i, n - 1) for i in range(1, n - 1)]
    inner = [(i, j) for j in range(1, n - 1) for i in range(1, n - 1)]
    return triangular_domain(inner, arc1, arc2, spec={"kind": "triangular", "shape": "rhombus", "n": n})


def triangular_corridor(length: int) -> DiscreteDomain:
    """Two facing rows of boundary sites and no interior: the interface is forced."""
    arc1 = [(i, 1) for i in range(length)]
    arc2 = [(i, 0) for i in range(length + 1)]
    return triangular_domain([], arc1, arc2, spec={"kind": "triangular", "shape": "corridor", "n": length})


def _axial_ring(sites):
    # boundary sites around a finite set, in clockwise order
    S = set(sites)
    ring = {(s[0] + d[0], s[1] + d[1]) for s in S for d in AXIAL_DIRS} - S
    start = min(ring, key=lambda p: (p[1], p[0]))
    order = [start]
    prev_dir = 3
    cur = start
    while True:
        for t in range(6):
            k = (prev_dir + 4 + t) % 6  # turn right first, then sweep left
            nxt = (cur[0] + AXIAL_DIRS[k][0], cur[1] + AXIAL_DIRS[k][1])
            if nxt in ring:
                break
        if nxt == start:
            break
        order.append(nxt)
        prev_dir = k
        cur = nxt
        if len(order) > 4 * len(ring) + 10:
            raise InvalidInput("could not order boundary ring")
    return order


def triangular_blob(sites, a_index: int, b_index: int) -> DiscreteDomain:
    """Domain from a set of free sites; the surrounding ring is cut at two positions.

    The ring is ordered clockwise; arc1 runs from ring[a_index + 1]
    forward to ring[b_index] and arc2 from ring[a_index] backward to
    ring[b_index + 1], so the marked edges are (ring[a+1], ring[a]) and
    (ring[b], ring[b+1]).
    """
    ring = _axial_ring(sites)
    m = len(ring)
    a_index %= m
    b_index %= m
    arc1 = []
    k = (a_index + 1) % m
    while True:
        arc1.append(ring[k])
        if k == b_index:
            break
        k = (k + 1) % m
    arc2 = []
    k = a_index
    while True:
        arc2.append(ring[k])
        if k == (b_index + 1) % m:
            break
        k = (k - 1) % m
    spec = {"kind": "triangular", "shape": "blob", "sites": [list(s) for s in sites],
            "a_index": a_index, "b_index": b_index}
    return triangular_domain(sites, arc1, arc2, spec=spec)


def square_box(m: int, n: int, a=None, b=None, wired: str | None = None) -> DiscreteDomain:
    """Vertices {0..m} x {0..n}; boundary is the outer ring.

    a, b default to the bottom and top centres.  arc1 holds b alone (value 1
    for harmonic measure of b), arc2 the rest of the boundary.
    """
    if m < 0 or n < 0 or m + n == 0:
        raise InvalidInput("box too small")
    xs, ys = np.meshgrid(np.arange(m + 1), np.arange(n + 1), indexing="ij")
    coords = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    idx = lambda x, y: x * (n + 1) + y
    pairs = []
    for x in range(m + 1):
        for y in range(n + 1):
            if x < m:
                pairs.append((idx(x, y), idx(x + 1, y)))
            if y < n:
                pairs.append((idx(x, y), idx(x, y + 1)))
    N = len(coords)
    indptr, indices = _csr(N, pairs)
    bnd = (coords[:, 0] == 0) | (coords[:, 0] == m) | (coords[:, 1] == 0) | (coords[:, 1] == n)
    a = (m // 2, 0) if a is None else tuple(a)
    b = (m // 2, n) if b is None else tuple(b)
    ia, ib = idx(*a), idx(*b)
    arc1 = np.array([ib], dtype=np.int64)
    arc2 = np.array([v for v in np.nonzero(bnd)[0] if v != ib], dtype=np.int64)
    spec = {"kind": "square", "shape": "box", "m": m, "n": n, "a": list(a), "b": list(b)}
    region = (0.0, 0.0, float(m), float(n))
    za, zb = complex(*a), complex(*b)
    if wired:
        if wired != "bottom":
            raise InvalidInput(f"unsupported wired arc {wired!r}; only 'bottom'")
        spec["wired"] = wired
        # vertices sit in cells of side 1; the wired row lies on the bottom side
        region = (-0.5, 0.0, m + 0.5, n + 0.5)
        za, zb = complex(-0.25, 0.0), complex(m + 0.25, 0.0)
    meta = {"region": region, "spec": spec, "m": m, "n": n, "a_index": ia, "b_index": ib,
            "wired": wired}
    return DiscreteDomain("square", coords, indptr, indices, bnd, arc1, arc2, za, zb, 1.0, meta)


def domain_from_spec(spec: dict) -> DiscreteDomain:
    kind = spec.get("kind")
    shape = spec.get("shape")
    if kind == "triangular" and shape == "rhombus":
        return triangular_rhombus(int(spec["n"]))
    if kind == "triangular" and shape == "corridor":
        return triangular_corridor(int(spec["n"]))
    if kind == "triangular" and shape == "blob":
        return triangular_blob([tuple(s) for s in spec["sites"]], int(spec["a_index"]), int(spec["b_index"]))
    if kind == "triangular" and "arc1" in spec:
        return triangular_domain(spec.get("sites", []), spec["arc1"], spec["arc2"], spec=spec)
    if kind == "square" and shape == "box":
        n = int(spec.get("n", spec.get("m")))
        return square_box(int(spec["m"]), n, spec.get("a"), spec.get("b"), spec.get("wired"))
    raise InvalidInput(f"unknown domain spec: kind={kind!r} shape={shape!r}")


def load_domain(path) -> DiscreteDomain:
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"{path}: line {e.lineno}: {e.msg}") from None
    if not isinstance(spec, dict):
        raise InvalidInput(f"{path}: domain spec must be a JSON object")
    try:
        return domain_from_spec(spec)
    except KeyError as e:
        raise InvalidInput(f"{path}: missing field {e}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, InvalidInput):
            raise InvalidInput(f"{path}: {e}") from None
        raise InvalidInput(f"{path}: bad field value: {e}") from None


# ---------------------------------------------------------------- harmonic


@dataclass
class HarmonicField:
    values: np.ndarray  # per site; boundary sites hold their boundary values
    interior: np.ndarray  # bool mask of solved sites
    residual: float = 0.0


def _laplacian_system(indptr, indices, free, fixed_vals):
    n = len(free)
    fidx = -np.ones(n, dtype=np.int64)
    fidx[free] = np.arange(free.sum())
    deg = np.diff(indptr)
    rows = np.repeat(np.arange(n), deg)
    cols = indices
    keep = free[rows]
    r, c = rows[keep], cols[keep]
    both = free[c]
    A = sparse.csr_matrix((-np.ones(both.sum()), (fidx[r[both]], fidx[c[both]])), shape=(free.sum(), free.sum()))
    A = A + sparse.diags(deg[free].astype(float))
    rhs = np.zeros(free.sum())
    np.add.at(rhs, fidx[r[~both]], fixed_vals[c[~both]])
    return A.tocsr(), rhs, fidx


@njit(cache=True)
def _apply(indptr, indices, free, x, out):
    # (D - A) restricted to free sites; x is zero on fixed sites
    for v in range(x.shape[0]):
        if not free[v]:
            out[v] = 0.0
            continue
        s = (indptr[v + 1] - indptr[v]) * x[v]
        for k in range(indptr[v], indptr[v + 1]):
            s -= x[indices[k]]
        out[v] = s


@njit(cache=True)
def _all_reach_fixed(indptr, indices, free):
    # BFS from the fixed sites through free ones
    n = free.shape[0]
    seen = np.zeros(n, dtype=np.bool_)
    q = np.empty(n, dtype=np.int64)
    t = 0
    for v in range(n):
        if not free[v]:
            seen[v] = True
            q[t] = v
            t += 1
    h = 0
    while h < t:
        v = q[h]
        h += 1
        for k in range(indptr[v], indptr[v + 1]):
            y = indices[k]
            if not seen[y]:
                seen[y] = True
                q[t] = y
                t += 1
    return t == n


@njit(cache=True)
def _cg_graph(indptr, indices, free, vals, x0, tol, maxit):
    n = vals.shape[0]
    b = np.zeros(n)
    for v in range(n):
        if free[v]:
            for k in range(indptr[v], indptr[v + 1]):
                y = indices[k]
                if not free[y]:
                    b[v] += vals[y]
    x = x0.copy()
    Ax = np.empty(n)
    _apply(indptr, indices, free, x, Ax)
    r = b - Ax
    p = r.copy()
    rr = (r * r).sum()
    Ap = np.empty(n)
    for it in range(maxit):
        if np.abs(r).max() <= 0.5 * tol:
            break
        _apply(indptr, indices, free, p, Ap)
        pAp = (p * Ap).sum()
        if pAp <= 0.0:
            break
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = (r * r).sum()
        p = r + (rr_new / rr) * p
        rr = rr_new
    # true residual
    _apply(indptr, indices, free, x, Ax)
    return x, np.abs(b - Ax).max()


def solve_dirichlet(indptr, indices, free, fixed_vals, x0=None, tol=1e-10):
    """Graph Dirichlet problem by CG; fixed_vals is read on non-free sites.

    x0, when given, is a warm start: a full-length array read on free sites.
    """
    free = np.asarray(free, dtype=bool)
    out = np.where(free, 0.0, fixed_vals).astype(float)
    if not free.any():
        return out, 0.0
    start = np.zeros(len(free))
    if x0 is not None:
        start[free] = np.nan_to_num(np.asarray(x0, dtype=float)[free])
    vals0 = np.where(free, 0.0, np.nan_to_num(out))
    if _all_reach_fixed(indptr, indices, free):
        x, res = _cg_graph(indptr, indices, free, vals0, start, tol, 20 * int(free.sum()) + 100)
        if res <= tol and np.all(np.isfinite(x)):
            out[free] = x[free]
            return out, float(res)
    # singular pieces or slow convergence: component check and sparse solve
    A, rhs, fidx = _laplacian_system(indptr, indices, free, np.nan_to_num(out))
    # components of the free graph that never see a fixed site are singular
    ncomp, lab = connected_components(A, directed=False)
    touches = np.zeros(ncomp, dtype=bool)
    deg_free = np.asarray((A != 0).sum(axis=1)).ravel() - 1
    deg_all = np.diff(indptr)[free]
    np.logical_or.at(touches, lab, deg_all > deg_free)
    bad = ~touches[lab]
    if bad.any():
        warnings.warn(f"{ncomp - touches.sum()} interior component(s) have no boundary; left undefined")
        keep = ~bad
        A = A[keep][:, keep]
        rhs = rhs[keep]
    if A.shape[0]:
        sol = spsolve(A.tocsc(), rhs)
        res = np.abs(A @ sol - rhs).max()
    else:
        sol = np.zeros(0)
        res = 0.0
    vals = np.full(free.sum(), np.nan)
    vals[~bad] = sol
    out[free] = vals
    return out, float(res)


def harmonic_solve(d: DiscreteDomain, boundary=None) -> HarmonicField:
    """Discrete harmonic function with the given boundary values.

    boundary: dict site -> value, or None for 1 on arc1 and 0 on arc2.
    Every boundary site of the domain must receive a value.
    """
    fixed = np.zeros(d.n_sites)
    given = np.zeros(d.n_sites, dtype=bool)
    if boundary is None:
        fixed[d.arc1] = 1.0
        given[d.arc1] = True
        given[d.arc2] = True
    else:
        for k, v in boundary.items():
            fixed[k] = v
            given[k] = True
    if np.any(d.boundary & ~given):
        raise InvalidInput("boundary partition does not cover all boundary sites")
    free = ~given
    vals, res = solve_dirichlet(d.indptr, d.indices, free, fixed)
    return HarmonicField(vals, free, res)


# ---------------------------------------------------------------- clusters


@dataclass
class EdgeConfig:
    n_vertices: int
    edges: np.ndarray  # (E, 2)
    open: np.ndarray  # bool (E,)
    wired: np.ndarray  # bool (E,), always open

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.open = np.asarray(self.open, dtype=bool).copy()
        self.wired = np.zeros(len(self.edges), dtype=bool) if self.wired is None else np.asarray(self.wired, dtype=bool)
        if np.any(self.wired & ~self.open):
            raise InvalidInput("wired edges must be open")


def component_count(cfg: EdgeConfig, wiring=None) -> int:
    """k_P(omega): clusters of the open subgraph after merging each block of P."""
    e = cfg.edges[cfg.open]
    extra = []
    for block in wiring or ():
        block = list(block)
        extra += [(block[0], v) for v in block[1:]]
    if extra:
        e = np.concatenate([e, np.asarray(extra, dtype=np.int64).reshape(-1, 2)])
    g = sparse.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(cfg.n_vertices, cfg.n_vertices))
    return int(connected_components(g, directed=False)[0])


# ---------------------------------------------------------------- walks


@njit(cache=True)
def _walk(indptr, indices, boundary, weights, start, uniforms, max_steps):
    path = np.empty(max_steps + 1, dtype=np.int64)
    path[0] = start
    x = start
    n = 1
    u = 0
    while True:
        lo = indptr[x]
        hi = indptr[x + 1]
        tot = 0.0
        for e in range(lo, hi):
            tot += weights[indices[e]]
        if tot <= 0.0:
            return path[:n], -1
        if u >= uniforms.shape[0]:
            return path[:n], -2
        r = uniforms[u] * tot
        u += 1
        acc = 0.0
        y = indices[hi - 1]
        for e in range(lo, hi):
            acc += weights[indices[e]]
            if r < acc:
                y = indices[e]
                break
        path[n] = y
        n += 1
        x = y
        if boundary[x] or n > max_steps:
            return path[:n], 0


def random_walk(d: DiscreteDomain, start: int, h: HarmonicField | np.ndarray | None = None,
                rng: np.random.Generator | None = None, max_steps: int = 10**8) -> np.ndarray:
    """Simple or Doob h-transformed walk from `start`, stopped on the boundary.

    Without h, a walk started on the boundary takes its first step into the
    interior.  With h, steps go to y with probability proportional to h(y).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if h is None:
        w = np.ones(d.n_sites)
        if d.boundary[start]:
            # first step conditioned inside: walk one step by hand
            nb = d.neighbors(start)
            nb = nb[~d.boundary[nb]]
            if len(nb) == 0:
                raise ConditioningError("start has no interior neighbour")
            first = int(nb[rng.integers(len(nb))])
            rest = random_walk(d, first, None, rng, max_steps)
            return np.concatenate([[start], rest])
    else:
        w = np.asarray(h.values if isinstance(h, HarmonicField) else h, dtype=float)
        w = np.nan_to_num(w)
    chunk = 4096
    path_all = [np.array([start], dtype=np.int64)]
    x = start
    steps = 0
    while True:
        u = rng.random(chunk)
        p, status = _walk(d.indptr, d.indices, d.boundary, w, x, u, min(chunk, max_steps - steps))
        if status == -1:
            raise ConditioningError(f"h vanishes on every neighbour of site {int(p[-1])}")
        path_all.append(p[1:])
        steps += len(p) - 1
        x = int(p[-1])
        if (status == 0 and d.boundary[x]) or steps >= max_steps:
            break
    return np.concatenate(path_all)


def measure_eta(d: DiscreteDomain, curve_points) -> float:
    """Half the smallest distance from an interior curve point to the domain boundary."""
    import shapely

    pts = np.asarray(curve_points)[1:-1]
    if len(pts) == 0:
        return float("nan")
    bnd = d.polygon().boundary
    dist = shapely.distance(shapely.points(pts[:, 0], pts[:, 1]), bnd)
    return 0.5 * float(dist.min())
