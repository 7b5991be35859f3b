"""Curves as parametrization-free objects.

Points are stored as an (n, 2) float array in lattice units.  The distance
between curves is the discrete Frechet distance of the polylines after
resampling, which bounds the infimum over reparametrizations from above and
converges to it as the resampling spacing goes to zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from numba import njit
from shapely.geometry import LineString

CROSSING_TOL = 1e-9


class InvalidInput(ValueError):
    pass


@dataclass
class Curve:
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1 and np.iscomplexobj(self.points):
            pts = np.column_stack([np.real(self.points), np.imag(self.points)])
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInput("curve points must have shape (n, 2)")
        if len(pts) < 1:
            raise InvalidInput("empty curve")
        self.points = pts

    @classmethod
    def from_complex(cls, z, **meta) -> "Curve":
        z = np.asarray(z, dtype=complex)
        return cls(np.column_stack([z.real, z.imag]), dict(meta))

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    def __len__(self) -> int:
        return len(self.points)

    def reversed(self) -> "Curve":
        return Curve(self.points[::-1].copy(), dict(self.meta))

    def diameter(self) -> float:
        return diameter(self.points)

    def to_json(self) -> str:
        rec = {
            "model": self.meta.get("model", ""),
            "seed": int(self.meta.get("seed", 0)),
            "spacing": float(self.meta.get("spacing", 1.0)),
            "points": [[float(x), float(y)] for x, y in self.points],
        }
        return json.dumps(rec, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Curve":
        rec = json.loads(line)
        meta = {k: rec[k] for k in ("model", "seed", "spacing") if k in rec}
        return cls(np.asarray(rec["points"], dtype=float), meta)


def write_ndjson(curves: Iterable[Curve], fh) -> None:
    for c in curves:
        fh.write(c.to_json())
        fh.write("\n")


def read_ndjson(fh) -> Iterator[Curve]:
    for line in fh:
        line = line.strip()
        if line:
            yield Curve.from_json(line)


@dataclass(frozen=True)
class Annulus:
    z0: tuple
    r: float
    R: float

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise InvalidInput(f"annulus needs 0 < r < R, got r={self.r}, R={self.R}")

    @property
    def center(self) -> complex:
        return complex(self.z0[0], self.z0[1])


@dataclass
class CrossingCount:
    total: int
    minimal: list
    ranges: list  # (start, end) segment indices of each minimal crossing


def _as_points(c) -> np.ndarray:
    if isinstance(c, Curve):
        return c.points
    pts = np.asarray(c)
    if np.iscomplexobj(pts):
        return np.column_stack([pts.real, pts.imag])
    return np.asarray(pts, dtype=float)


def diameter(points) -> float:
    pts = _as_points(points)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 64:
        from scipy.spatial import ConvexHull

        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def resample(points, spacing: float) -> np.ndarray:
    """Insert points so that every segment is at most `spacing` long."""
    pts = _as_points(points)
    if len(pts) < 2:
        return pts.copy()
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    k = np.maximum(1, np.ceil(lens / spacing - 1e-12).astype(int))
    out = [pts[:1]]
    for i in range(len(seg)):
        u = np.arange(1, k[i] + 1)[:, None] / k[i]
        out.append(pts[i] + u * seg[i])
    return np.concatenate(out)


@njit(cache=True)
def _frechet(p, q):
    n = p.shape[0]
    m = q.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        for j in range(m):
            d = math.hypot(p[i, 0] - q[j, 0], p[i, 1] - q[j, 1])
            if i == 0 and j == 0:
                best = d
            elif i == 0:
                best = max(cur[j - 1], d)
            elif j == 0:
                best = max(prev[j], d)
            else:
                b = min(prev[j], prev[j - 1], cur[j - 1])
                best = max(b, d)
            cur[j] = best
        prev, cur = cur, prev
    return prev[m - 1]


def discrete_frechet(p, q) -> float:
    p = np.ascontiguousarray(_as_points(p), dtype=float)
    q = np.ascontiguousarray(_as_points(q), dtype=float)
    if len(p) == 0 or len(q) == 0:
        raise InvalidInput("empty curve")
    return float(_frechet(p, q))


def curve_distance(c1, c2, refine: float) -> float:
    """Discrete Frechet distance after resampling both curves at spacing <= refine."""
    if refine <= 0:
        raise InvalidInput("refine must be positive")
    p = _as_points(c1)
    q = _as_points(c2)
    if len(p) == 0 or len(q) == 0:
        raise InvalidInput("empty curve")
    return discrete_frechet(resample(p, refine), resample(q, refine))


@njit(cache=True)
def _tortuosity_continuous(pts, l):
    n = pts.shape[0]
    l2 = l * l * (1.0 + 1e-12)
    # members of the current piece: its start point plus absorbed vertices
    mem = np.empty((n + 1, 2))
    mem[0, 0] = pts[0, 0]
    mem[0, 1] = pts[0, 1]
    nm = 1
    count = 1
    i = 0
    sx = pts[0, 0]
    sy = pts[0, 1]
    while i < n - 1:
        ex = pts[i + 1, 0]
        ey = pts[i + 1, 1]
        dx = ex - sx
        dy = ey - sy
        a = dx * dx + dy * dy
        if a == 0.0:
            i += 1
            continue
        hi = 1.0
        for k in range(nm):
            # |s + u d - x|^2 <= l^2 is an interval in u containing 0
            wx = sx - mem[k, 0]
            wy = sy - mem[k, 1]
            b = wx * dx + wy * dy
            c = wx * wx + wy * wy - l2
            disc = b * b - a * c
            if disc < 0.0:
                disc = 0.0
            root = (-b + math.sqrt(disc)) / a
            if root < hi:
                hi = root
        if hi >= 1.0 - 1e-12:
            mem[nm, 0] = ex
            mem[nm, 1] = ey
            nm += 1
            sx = ex
            sy = ey
            i += 1
        else:
            if hi < 0.0:
                hi = 0.0
            sx = sx + hi * dx
            sy = sy + hi * dy
            mem[0, 0] = sx
            mem[0, 1] = sy
            nm = 1
            count += 1
    return count


@njit(cache=True)
def _tortuosity_vertex(pts, l):
    n = pts.shape[0]
    l2 = l * l * (1.0 + 1e-12)
    count = 1
    start = 0
    for j in range(1, n):
        ok = True
        for k in range(start, j):
            dx = pts[j, 0] - pts[k, 0]
            dy = pts[j, 1] - pts[k, 1]
            if dx * dx + dy * dy > l2:
                ok = False
                break
        if not ok:
            # the previous vertex closes the piece and opens the next one
            start = j - 1
            dx = pts[j, 0] - pts[start, 0]
            dy = pts[j, 1] - pts[start, 1]
            if dx * dx + dy * dy > l2:
                return -1
            count += 1
    return count


def tortuosity(c, l: float, breaks: str = "continuous") -> int:
    """M(gamma, l): fewest pieces of diameter <= l covering the curve.

    Feasibility of a piece only shrinks as it is extended, so extending each
    piece as far as possible is optimal.  With breaks="vertex" the pieces
    may only end at vertices; a segment longer than l then makes the
    partition impossible and InvalidInput is raised.
    """
    if l <= 0:
        raise InvalidInput("l must be positive")
    pts = np.ascontiguousarray(_as_points(c), dtype=float)
    if len(pts) < 2:
        return 1
    if breaks == "continuous":
        return int(_tortuosity_continuous(pts, float(l)))
    if breaks == "vertex":
        m = int(_tortuosity_vertex(pts, float(l)))
        if m < 0:
            raise InvalidInput("a segment is longer than l")
        return m
    raise InvalidInput(f"unknown breaks mode {breaks!r}")


def visit_sequence(points, z0: complex, r: float, R: float, tol: float = CROSSING_TOL):
    """Ordered visits of the inner disc (-1) and the outer region (+1).

    Along a segment the distance to z0 is convex, so each segment contributes
    at most: outer at its start, inner in its middle, outer at its end.
    Returns labels and the segment index at which each visit happens.
    """
    pts = _as_points(points)
    p = pts[:, 0] + 1j * pts[:, 1] - z0
    d = np.abs(p)
    if len(p) == 1:
        if d[0] <= r + tol:
            return [-1], [0]
        if d[0] >= R - tol:
            return [1], [0]
        return [], []
    s = p[:-1]
    e = p[1:]
    v = e - s
    vv = (v * v.conj()).real
    u = np.where(vv > 0, -(s * v.conj()).real / np.where(vv > 0, vv, 1), 0.0)
    u = np.clip(u, 0.0, 1.0)
    dmin = np.abs(s + u * v)
    inner_mid = dmin <= r + tol
    outer_s = d[:-1] >= R - tol
    outer_e = d[1:] >= R - tol
    # events of segment i in order: outer at start, inner, outer at end
    ev = np.column_stack([outer_s, inner_mid, outer_e]).ravel()
    lab = np.tile(np.array([1, -1, 1]), len(s))[ev]
    at = (np.arange(len(s))[:, None] + np.array([0, 0, 1])[None, :]).ravel()[ev]
    return lab.tolist(), at.tolist()


def count_crossings(c, a: Annulus, tol: float = CROSSING_TOL) -> CrossingCount:
    labels, where = visit_sequence(c, a.center, a.r, a.R, tol)
    lab = np.asarray(labels)
    at = np.asarray(where)
    k = np.nonzero(lab[1:] != lab[:-1])[0] if len(lab) > 1 else np.empty(0, dtype=int)
    # within a run of equal labels only the last visit starts the crossing
    ranges = [(int(at[i]), int(at[i + 1])) for i in k]
    return CrossingCount(total=len(ranges), minimal=[True] * len(ranges), ranges=ranges)


def is_simple(c) -> bool:
    pts = _as_points(c)
    if len(pts) < 2:
        return True
    if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
        return False
    return bool(LineString(pts).is_simple)
