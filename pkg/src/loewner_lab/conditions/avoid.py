"""Unforced parts of an annulus in a slit domain.

U_t is the domain minus the curve up to time t.  Its boundary, read from the
tip to the target b, splits into a left arc (left side of the slit, then the
clockwise boundary arc from a to b) and a right arc.  In a simply connected
domain a connected set disconnects the tip from b exactly when its closure
meets both arcs, so each component of U_t cap A only needs two bits.

Everything is done on a pixel raster aligned to a fixed global grid.  The
slit does not occupy pixels: it cuts the links between neighbouring pixel
centres, which keeps the topology exact at any pixel size smaller than the
gap between two curve strands.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from numba import njit
from shapely.geometry.polygon import orient

from ..geometry import Annulus, InvalidInput
from ..lattice import DiscreteDomain

LEFT = 1
RIGHT = 2
PIXEL = 0.125


@dataclass
class Component:
    label: int
    size: int
    sides: int  # LEFT | RIGHT bits met by the closure
    avoidable: bool


@dataclass
class AvoidableSet:
    annulus: Annulus
    tip: complex
    target: complex
    components: list = field(default_factory=list)
    labels: np.ndarray | None = None  # raster labels, 0 = not in U_t cap A
    origin: tuple = (0, 0)  # global pixel index of labels[0, 0]
    empty_reason: str | None = None

    @property
    def avoidable(self) -> list:
        return [c for c in self.components if c.avoidable]

    def is_empty(self) -> bool:
        return not self.avoidable

    def label_at(self, raster: "DomainRaster", xy) -> np.ndarray:
        """Component label under each point (0 if none); looks one pixel around."""
        if self.labels is None:
            return np.zeros(len(np.atleast_2d(xy)), dtype=np.int64)
        ij = raster.pixel_of(xy) - np.array(self.origin)
        out = np.zeros(len(ij), dtype=np.int64)
        nx, ny = self.labels.shape
        for k, (i, j) in enumerate(ij):
            for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny and self.labels[ii, jj] > 0:
                    out[k] = self.labels[ii, jj]
                    break
        return out


class DomainRaster:
    """Pixel mask of a domain with boundary-side bits, computed once."""

    def __init__(self, d: DiscreteDomain, h: float = PIXEL, pad: float = 1.0):
        self.d = d
        self.h = h
        x0, y0, x1, y1 = d.bbox()
        self.i0 = int(np.floor((x0 - pad) / h))
        self.j0 = int(np.floor((y0 - pad) / h))
        nx = int(np.ceil((x1 + pad) / h)) - self.i0
        ny = int(np.ceil((y1 + pad) / h)) - self.j0
        xs = (self.i0 + np.arange(nx) + 0.5) * h
        ys = (self.j0 + np.arange(ny) + 0.5) * h
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        self.inside = d.contains(np.column_stack([X.ravel(), Y.ravel()])).reshape(nx, ny)
        poly = orient(d.polygon(), 1.0)
        self.ring = poly.exterior
        self.boundary = d.polygon().boundary
        self.sides = np.zeros((nx, ny), dtype=np.uint8)
        ins = self.inside
        edge = np.zeros_like(ins)
        edge[1:, :] |= ~ins[:-1, :]
        edge[:-1, :] |= ~ins[1:, :]
        edge[:, 1:] |= ~ins[:, :-1]
        edge[:, :-1] |= ~ins[:, 1:]
        edge[0, :] = edge[-1, :] = True
        edge[:, 0] = edge[:, -1] = True
        edge &= ins
        ii, jj = np.nonzero(edge)
        if len(ii):
            pts = shapely.points(xs[ii], ys[jj])
            s = shapely.line_locate_point(self.ring, pts)
            self.sides[ii, jj] = self._ring_side(s)

    def _ring_side(self, s):
        P = self.ring.length
        sa = self.ring.project(shapely.Point(self.d.a.real, self.d.a.imag))
        sb = self.ring.project(shapely.Point(self.d.b.real, self.d.b.imag))
        # counterclockwise from a to b is the right-hand arc of a curve a -> b
        right = np.mod(s - sa, P) < np.mod(sb - sa, P)
        return np.where(right, RIGHT, LEFT).astype(np.uint8)

    def pixel_of(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.floor(xy / self.h).astype(np.int64) - np.array([self.i0, self.j0])

    def center(self, i, j):
        return (self.i0 + i + 0.5) * self.h, (self.j0 + j + 0.5) * self.h

    def boundary_distance(self, z0) -> float:
        return float(shapely.distance(shapely.Point(z0.real, z0.imag), self.boundary))


@njit(cache=True)
def _cut_links(seg, X0, Y0, h, nx, ny, hcut, vcut, bits):
    # seg: (k, 4) segments; grid pixel (i, j) has centre (X0 + i h, Y0 + j h).
    # A link may be crossed several times (a sharp turn); each pixel takes its
    # side from the crossing nearest to it.
    inf = np.inf
    hlo = np.full((nx, ny), inf)
    hhi = np.full((nx, ny), -inf)
    vlo = np.full((nx, ny), inf)
    vhi = np.full((nx, ny), -inf)
    hs = np.zeros((nx, ny, 2), dtype=np.uint8)
    vs = np.zeros((nx, ny, 2), dtype=np.uint8)
    for s in range(seg.shape[0]):
        px, py, qx, qy = seg[s, 0], seg[s, 1], seg[s, 2], seg[s, 3]
        dx, dy = qx - px, qy - py
        ilo = max(int(np.floor((min(px, qx) - X0) / h)) - 1, 0)
        ihi = min(int(np.ceil((max(px, qx) - X0) / h)) + 1, nx - 1)
        jlo = max(int(np.floor((min(py, qy) - Y0) / h)) - 1, 0)
        jhi = min(int(np.ceil((max(py, qy) - Y0) / h)) + 1, ny - 1)
        for i in range(ilo, ihi + 1):
            for j in range(jlo, jhi + 1):
                cx = X0 + i * h
                cy = Y0 + j * h
                c0 = dx * (cy - py) - dy * (cx - px)
                if i + 1 < nx and dy != 0:
                    c1 = dx * (cy - py) - dy * (cx + h - px)
                    t = (cy - py) / dy
                    if c0 * c1 < 0 and 0 <= t <= 1:
                        x = px + t * dx
                        if cx <= x <= cx + h:
                            hcut[i, j] = True
                            if x < hlo[i, j]:
                                hlo[i, j] = x
                                hs[i, j, 0] = 1 if c0 > 0 else 2
                            if x > hhi[i, j]:
                                hhi[i, j] = x
                                hs[i, j, 1] = 1 if c1 > 0 else 2
                if j + 1 < ny and dx != 0:
                    c1 = dx * (cy + h - py) - dy * (cx - px)
                    t = (cx - px) / dx
                    if c0 * c1 < 0 and 0 <= t <= 1:
                        y = py + t * dy
                        if cy <= y <= cy + h:
                            vcut[i, j] = True
                            if y < vlo[i, j]:
                                vlo[i, j] = y
                                vs[i, j, 0] = 1 if c0 > 0 else 2
                            if y > vhi[i, j]:
                                vhi[i, j] = y
                                vs[i, j, 1] = 1 if c1 > 0 else 2
    for i in range(nx):
        for j in range(ny):
            if hcut[i, j]:
                bits[i, j] |= hs[i, j, 0]
                bits[i + 1, j] |= hs[i, j, 1]
            if vcut[i, j]:
                bits[i, j] |= vs[i, j, 0]
                bits[i, j + 1] |= vs[i, j, 1]


@njit(cache=True)
def _label(free, hcut, vcut, bits):
    nx, ny = free.shape
    lab = np.zeros((nx, ny), dtype=np.int64)
    qi = np.empty(nx * ny, dtype=np.int64)
    qj = np.empty(nx * ny, dtype=np.int64)
    sides = []
    sizes = []
    k = 0
    for si in range(nx):
        for sj in range(ny):
            if not free[si, sj] or lab[si, sj]:
                continue
            k += 1
            lab[si, sj] = k
            qi[0], qj[0] = si, sj
            head, tail = 0, 1
            acc = 0
            while head < tail:
                i, j = qi[head], qj[head]
                head += 1
                acc |= bits[i, j]
                if i + 1 < nx and free[i + 1, j] and not lab[i + 1, j] and not hcut[i, j]:
                    lab[i + 1, j] = k
                    qi[tail], qj[tail] = i + 1, j
                    tail += 1
                if i > 0 and free[i - 1, j] and not lab[i - 1, j] and not hcut[i - 1, j]:
                    lab[i - 1, j] = k
                    qi[tail], qj[tail] = i - 1, j
                    tail += 1
                if j + 1 < ny and free[i, j + 1] and not lab[i, j + 1] and not vcut[i, j]:
                    lab[i, j + 1] = k
                    qi[tail], qj[tail] = i, j + 1
                    tail += 1
                if j > 0 and free[i, j - 1] and not lab[i, j - 1] and not vcut[i, j - 1]:
                    lab[i, j - 1] = k
                    qi[tail], qj[tail] = i, j - 1
                    tail += 1
            sides.append(acc)
            sizes.append(tail)
    return lab, sides, sizes


def _segments(prefix: np.ndarray) -> np.ndarray:
    if len(prefix) < 2:
        return np.empty((0, 4))
    # a sits on the domain boundary; continue the slit outward past it so no
    # pixel link slips around its foot
    v = prefix[0] - prefix[1]
    n = np.hypot(*v)
    if n > 0:
        prefix = np.concatenate([[prefix[0] + v / n], prefix])
    return np.column_stack([prefix[:-1], prefix[1:]]).astype(float)


def slit_window(raster: DomainRaster, prefix, lo, hi):
    """Pixel window [lo, hi) of the global grid with slit cuts and side bits."""
    (i0, j0), (i1, j1) = lo, hi
    nx, ny = i1 - i0, j1 - j0
    hcut = np.zeros((nx, ny), dtype=np.bool_)
    vcut = np.zeros((nx, ny), dtype=np.bool_)
    bits = raster.sides[i0:i1, j0:j1].copy()
    seg = _segments(np.asarray(prefix, dtype=float))
    if len(seg):
        X0, Y0 = raster.center(i0, j0)
        h = raster.h
        m = ((np.maximum(seg[:, 0], seg[:, 2]) >= X0 - h) & (np.minimum(seg[:, 0], seg[:, 2]) <= X0 + nx * h)
             & (np.maximum(seg[:, 1], seg[:, 3]) >= Y0 - h) & (np.minimum(seg[:, 1], seg[:, 3]) <= Y0 + ny * h))
        if m.any():
            _cut_links(np.ascontiguousarray(seg[m]), X0, Y0, h, nx, ny, hcut, vcut, bits)
    return hcut, vcut, bits


def tip_ok(raster: DomainRaster, tip: complex) -> bool:
    return raster.boundary_distance(tip) <= 1e-6 or raster.d.polygon().covers(shapely.Point(tip.real, tip.imag))


def slit_distances(centres: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """Distance from each centre (complex array) to the polyline."""
    z = prefix[:, 0] + 1j * prefix[:, 1]
    out = np.full(len(centres), np.inf)
    if len(z) == 1:
        return np.abs(centres - z[0])
    s0, v = z[:-1], np.diff(z)
    vv = np.abs(v) ** 2
    vv = np.where(vv > 0, vv, 1.0)
    step = max(1, 2_000_000 // max(1, len(s0)))
    for k in range(0, len(centres), step):
        c = centres[k:k + step, None]
        s = s0[None, :] - c
        u = np.clip(-(s * v.conj()[None, :]).real / vv[None, :], 0, 1)
        out[k:k + step] = np.abs(s + u * v[None, :]).min(axis=1)
    return out


def _slit_distance(z0: complex, prefix: np.ndarray) -> float:
    return float(slit_distances(np.array([z0]), prefix)[0])


def avoidable_components(raster: DomainRaster, prefix, ann: Annulus, target=None, dist=None,
                         checked=False) -> AvoidableSet:
    """Components of U_t cap A flagged avoidable or forced.

    `prefix` is the curve up to the stopping time; its last point is the tip.
    A^u is empty when the inner circle misses the boundary of U_t.  Callers
    scanning many annuli may pass the distance from the centre to that
    boundary and skip the tip check.
    """
    d = raster.d
    prefix = np.atleast_2d(np.asarray(prefix, dtype=float))
    tip = complex(*prefix[-1])
    target = d.b if target is None else complex(target)
    if not checked and not tip_ok(raster, tip):
        raise InvalidInput("tip is not in the closure of the domain")
    out = AvoidableSet(ann, tip, target)
    z0 = ann.center
    if dist is None:
        dist = min(raster.boundary_distance(z0), _slit_distance(z0, prefix))
    if dist > ann.r:
        out.empty_reason = "inner circle misses the boundary"
        return out
    h = raster.h
    lo = raster.pixel_of([[z0.real - ann.R, z0.imag - ann.R]])[0]
    hi = raster.pixel_of([[z0.real + ann.R, z0.imag + ann.R]])[0] + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, raster.inside.shape)
    if np.any(hi <= lo):
        out.empty_reason = "annulus misses the domain"
        return out
    hcut, vcut, bits = slit_window(raster, prefix, lo, hi)
    xs = (raster.i0 + np.arange(lo[0], hi[0]) + 0.5) * h - z0.real
    ys = (raster.j0 + np.arange(lo[1], hi[1]) + 0.5) * h - z0.imag
    rad = np.hypot(xs[:, None], ys[None, :])
    free = raster.inside[lo[0]:hi[0], lo[1]:hi[1]] & (rad > ann.r) & (rad < ann.R)
    lab, sides, sizes = _label(free, hcut, vcut, bits)
    out.labels = lab
    out.origin = (int(lo[0]), int(lo[1]))
    for k, (s, n) in enumerate(zip(sides, sizes), start=1):
        out.components.append(Component(k, int(n), int(s), avoidable=int(s) != LEFT | RIGHT))
    return out


def flood_check(raster: DomainRaster, prefix, aset: AvoidableSet, label: int, reach: float | None = None) -> bool:
    """True if removing one component leaves the tip connected to the target.

    Brute force on the whole domain raster: neighbourhoods are the free
    pixels within `reach` (two pixels by default) of the tip and of b.
    """
    from collections import deque

    reach = 2 * raster.h if reach is None else reach
    nx, ny = raster.inside.shape
    hcut, vcut, _ = slit_window(raster, prefix, (0, 0), (nx, ny))
    free = raster.inside.copy()
    if aset.labels is not None:
        i0, j0 = aset.origin
        w = aset.labels == label
        free[i0:i0 + w.shape[0], j0:j0 + w.shape[1]] &= ~w
    X = (raster.i0 + np.arange(nx) + 0.5) * raster.h
    Y = (raster.j0 + np.arange(ny) + 0.5) * raster.h

    def near(z):
        return free & (np.hypot(X[:, None] - z.real, Y[None, :] - z.imag) < reach)

    src, dst = near(aset.tip), near(aset.target)
    if not src.any() or not dst.any():
        return False
    seen = src.copy()
    q = deque(zip(*np.nonzero(src)))
    while q:
        i, j = q.popleft()
        if dst[i, j]:
            return True
        for ii, jj, ok in ((i + 1, j, i + 1 < nx and not hcut[i, j]), (i - 1, j, i > 0 and not hcut[i - 1, j]),
                           (i, j + 1, j + 1 < ny and not vcut[i, j]), (i, j - 1, j > 0 and not vcut[i, j - 1])):
            if ok and free[ii, jj] and not seen[ii, jj]:
                seen[ii, jj] = True
                q.append((ii, jj))
    return False
