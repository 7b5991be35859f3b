"""Discrete modulus of a topological quadrilateral.

The modulus is the extremal length of the curves joining S0 and S2; it is
1 / E where E is the Dirichlet energy of the potential equal to 0 on S0 and
1 on S2 with S1, S3 insulated.  The energy is discretised with finite
volumes on a square grid: interior links are weighted by the part of their
dual segment inside the region, and links leaving the region through S0 or
S2 use the boundary-intersection distance (Shortley-Weller).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy import sparse
from scipy.sparse.linalg import spsolve
from shapely.geometry import LineString, Polygon

from ..geometry import InvalidInput


@dataclass
class TopQuad:
    """Polygon with four boundary arcs S0..S3 in counterclockwise order.

    `corners` are four vertex indices of the counterclockwise outline; arc k
    runs from corners[k] to corners[k + 1].
    """
    outline: np.ndarray
    corners: tuple
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.outline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise InvalidInput("outline needs at least four points")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if _signed_area(pts) < 0:
            raise InvalidInput("outline must be counterclockwise")
        c = [int(k) for k in self.corners]
        if len(c) != 4 or c != sorted(c) or len(set(c)) != 4 or c[0] < 0 or c[-1] >= len(pts):
            raise InvalidInput("corners must be four increasing vertex indices")
        poly = Polygon(pts)
        if not poly.is_valid or poly.area <= 0:
            raise InvalidInput("outline is not a simple polygon")
        self.outline = pts
        self.corners = tuple(c)

    def arc(self, k: int) -> np.ndarray:
        n = len(self.outline)
        i, j = self.corners[k], self.corners[(k + 1) % 4]
        idx = np.arange(i, j + 1) if j > i else np.r_[np.arange(i, n), np.arange(0, j + 1)]
        return self.outline[idx]

    def polygon(self) -> Polygon:
        return Polygon(self.outline)

    def scaled(self, s: float, shift=(0.0, 0.0)) -> "TopQuad":
        return TopQuad(self.outline * s + np.asarray(shift), self.corners)

    def conjugate(self) -> "TopQuad":
        """Same region with the roles of (S0, S2) and (S1, S3) swapped."""
        c = self.corners
        n = len(self.outline)
        return TopQuad(np.roll(self.outline, -c[1], axis=0), tuple((k - c[1]) % n for k in (c[1], c[2], c[3], c[0])))


def _signed_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def rectangle(L: float, H: float = 1.0) -> TopQuad:
    """[0, L] x [0, H] with S0 the left side."""
    return TopQuad(np.array([[0, H], [0, 0], [L, 0], [L, H]], float), (0, 1, 2, 3))


def l_shape(a: float = 2.0, w: float = 1.0) -> TopQuad:
    """L-shaped corridor of arm length a and width w; S0, S2 are the arm ends."""
    pts = np.array([[0, a], [0, 0], [a, 0], [a, w], [w, w], [w, a]], float)
    # S0 = top end, S1 = outer wall, S2 = right end, S3 = inner wall
    return TopQuad(np.roll(pts, -5, axis=0), (0, 1, 3, 4))


def cut_annulus(r: float, R: float, n: int = 512, gap: float = 1e-6) -> TopQuad:
    """A(0, r, R) cut along the positive real axis; S0 inner, S2 outer circle."""
    if not 0 < r < R:
        raise InvalidInput("need 0 < r < R")
    t = np.linspace(gap, 2 * np.pi - gap, n)
    inner = r * np.column_stack([np.cos(t[::-1]), np.sin(t[::-1])])
    outer = R * np.column_stack([np.cos(t), np.sin(t)])
    pts = np.concatenate([inner, outer])
    return TopQuad(pts, (0, n - 1, n, 2 * n - 1))


@dataclass
class ModulusResult:
    value: float
    energy: float
    h: float
    n_unknowns: int


def _arc_of(quad: TopQuad, pts):
    """Arc index of the boundary point nearest to each point."""
    d = np.stack([shapely.distance(shapely.points(pts), LineString(quad.arc(k))) for k in range(4)])
    return np.argmin(d, axis=0)


def modulus_quad(quad: TopQuad, refinement: int = 4, h: float | None = None) -> ModulusResult:
    """Discrete modulus; the grid step is (shortest arc) / (4 refinement)."""
    if refinement < 1:
        raise InvalidInput("refinement must be >= 1")
    key = (refinement, h)
    if key in quad.cache:
        return quad.cache[key]
    orig = quad
    lens = [LineString(quad.arc(k)).length for k in range(4)]
    if min(lens) <= 0:
        raise InvalidInput("degenerate arc")
    # work on a copy with unit shortest arc at the origin so that similar
    # quadrilaterals give the same linear system
    unit = min(lens)
    lo = quad.outline.min(axis=0)
    quad = TopQuad((quad.outline - lo) / unit, quad.corners)
    h = 1.0 / (4 * refinement) if h is None else h / unit
    tol = 1e-9
    poly = quad.polygon()
    ring = poly.exterior
    x0, y0, x1, y1 = poly.bounds
    # one node beyond the far sides so links leaving through them exist
    nx = int(math.floor((x1 - x0) / h + 1e-9)) + 2
    ny = int(math.floor((y1 - y0) / h + 1e-9)) + 2
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    pts = shapely.points(P)
    bdist = shapely.distance(pts, ring)
    inside = shapely.contains(poly, pts) | (bdist <= tol)
    on_bnd = inside & (bdist <= tol)
    arcs = np.full(len(P), -1)
    if on_bnd.any():
        arcs[on_bnd] = _arc_of(quad, P[on_bnd])
    value = np.full(len(P), np.nan)
    value[on_bnd & (arcs == 0)] = 0.0
    value[on_bnd & (arcs == 2)] = 1.0
    # corners shared with S0 or S2 take the Dirichlet value
    for k, v in ((0, 0.0), (2, 1.0)):
        a = quad.arc(k)
        for end in (a[0], a[-1]):
            near = on_bnd & (np.hypot(P[:, 0] - end[0], P[:, 1] - end[1]) <= tol)
            value[near] = v
    free = inside & np.isnan(value)
    idx = np.full(len(P), -1)
    idx[free] = np.arange(int(free.sum()))
    nu = int(free.sum())
    if nu == 0:
        raise InvalidInput("grid too coarse for this quadrilateral")
    fixed = inside & ~free

    fat = poly.buffer(tol, join_style="mitre")
    rows, cols, vals = [], [], []
    diag = np.zeros(nu)
    rhs = np.zeros(nu)
    const = 0.0
    for di, dj in ((1, 0), (0, 1)):
        I, J = np.meshgrid(np.arange(nx - di), np.arange(ny - dj), indexing="ij")
        u = (I * ny + J).ravel()
        v = ((I + di) * ny + J + dj).ravel()
        keep = inside[u] | inside[v]
        u, v = u[keep], v[keep]
        link = shapely.linestrings(np.stack([P[u], P[v]], axis=1))
        ok = inside[u] & inside[v]
        ok[ok] = shapely.covers(fat, link[ok])
        # weight = part of the dual segment through the midpoint inside the region
        mid = (P[u[ok]] + P[v[ok]]) / 2
        off = np.array([0.0, h / 2]) if di else np.array([h / 2, 0.0])
        dual = shapely.linestrings(np.stack([mid - off, mid + off], axis=1))
        w = shapely.length(shapely.intersection(dual, poly)) / h
        a, b = u[ok], v[ok]
        ff = free[a] & free[b]
        rows.append(np.r_[idx[a[ff]], idx[b[ff]]])
        cols.append(np.r_[idx[b[ff]], idx[a[ff]]])
        vals.append(np.r_[-w[ff], -w[ff]])
        np.add.at(diag, idx[a[ff]], w[ff])
        np.add.at(diag, idx[b[ff]], w[ff])
        for s_, t_ in ((a, b), (b, a)):
            m = free[s_] & fixed[t_]
            g = value[t_[m]]
            np.add.at(diag, idx[s_[m]], w[m])
            np.add.at(rhs, idx[s_[m]], w[m] * g)
            const += float(np.sum(w[m] * g * g))
        m = fixed[a] & fixed[b]
        const += float(np.sum(w[m] * (value[a[m]] - value[b[m]]) ** 2))
        # links leaving through S0 or S2 end at the crossing point
        for s_, t_ in zip(np.r_[u[~ok], v[~ok]], np.r_[v[~ok], u[~ok]]):
            if not free[s_]:
                continue
            hit = shapely.intersection(LineString([P[s_], P[t_]]), ring)
            if hit.is_empty:
                continue
            hp = shapely.get_coordinates(hit)
            dd = np.hypot(hp[:, 0] - P[s_, 0], hp[:, 1] - P[s_, 1])
            k = int(np.argmin(dd))
            arc = int(_arc_of(quad, hp[k:k + 1])[0])
            if arc in (0, 2) and dd[k] > tol:
                g = 0.0 if arc == 0 else 1.0
                wc = h / dd[k]
                diag[idx[s_]] += wc
                rhs[idx[s_]] += wc * g
                const += wc * g * g
    A = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nu, nu)).tocsr() + sparse.diags(diag)
    x = spsolve(A.tocsc(), rhs)
    # at the minimiser A x = rhs, so the energy is const - rhs . x
    E = float(const - rhs @ x)
    if not E > 0:
        raise InvalidInput("S0 and S2 are not connected in the grid")
    res = ModulusResult(1.0 / E, E, float(h * unit), nu)
    orig.cache[key] = res
    return res


def slabs(L: float, k: int, H: float = 1.0) -> list:
    """The L x H rectangle cut into k equal slabs across its length."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    w = L / k
    return [rectangle(w, H).scaled(1.0, (i * w, 0.0)) for i in range(k)]


def serial_moduli(L: float, k: int, refinement: int = 4, H: float = 1.0):
    """(sum of slab moduli, modulus of the whole); equal for exact moduli."""
    parts = sum(modulus_quad(q, refinement).value for q in slabs(L, k, H))
    return parts, modulus_quad(rectangle(L, H), refinement).value
