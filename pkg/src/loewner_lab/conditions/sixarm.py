"""Deep fjords E(r, R) and multiple crossings of annuli.

A curve realises E(r, R) when at some time s a crosscut C of the slit
domain, with diam C <= r and one end on the curve, cuts off a pocket that
the curve then explores to diameter >= R before leaving through C, the
pocket staying at distance > rho from the target.

Both boundary arcs are prepended (from b to a) to the curve, which turns
crosscuts ending on the domain boundary into pairs of points of one path.
For a pair (i, j) the pocket is the region bounded by path[i..j] and the
segment C = [path_i, path_j]; the search takes s = j, the tip.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely
from numba import njit

from ..geometry import Annulus, InvalidInput, count_crossings
from ..lattice import DiscreteDomain
from .constants import fit_power_law
from .report import CrossingReport


@dataclass
class SixArmWitness:
    s: int  # curve index of the tip when the crosscut is drawn
    t: int  # curve index where the curve leaves the pocket (or its last index)
    crosscut: tuple  # ((x, y), (x, y)); the second end is the tip
    on_boundary: bool  # the first end lies on the domain boundary


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _proper(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = _orient(ax, ay, bx, by, cx, cy)
    d2 = _orient(ax, ay, bx, by, dx, dy)
    d3 = _orient(cx, cy, dx, dy, ax, ay)
    d4 = _orient(cx, cy, dx, dy, bx, by)
    return d1 * d2 < 0 and d3 * d4 < 0


@njit(cache=True)
def _hits(px, py, qx, qy, cx, cy, dx, dy):
    """Segment [c, d] crosses or touches the interior of C = [p, q]."""
    if _proper(px, py, qx, qy, cx, cy, dx, dy):
        return True
    for x, y in ((cx, cy), (dx, dy)):
        if (_seg_dist(x, y, px, py, qx, qy) <= 1e-9 and np.hypot(x - px, y - py) > 1e-9
                and np.hypot(x - qx, y - qy) > 1e-9):
            return True
    return False


@njit(cache=True)
def _seg_dist(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    L = vx * vx + vy * vy
    t = 0.0 if L == 0 else ((px - ax) * vx + (py - ay) * vy) / L
    t = min(1.0, max(0.0, t))
    return np.hypot(px - ax - t * vx, py - ay - t * vy)


@njit(cache=True)
def _far_tables(E, R):
    m = len(E)
    last_far = np.full(m, -1, np.int64)
    for k in range(m):
        for l in range(k - 1, -1, -1):
            if np.hypot(E[k, 0] - E[l, 0], E[k, 1] - E[l, 1]) >= R:
                last_far[k] = l
                break
    # LF[j]: largest i with diam E[i..j] >= R
    LF = np.empty(m, np.int64)
    cur = -1
    for k in range(m):
        cur = max(cur, last_far[k])
        LF[k] = cur
    # U[j]: first k with diam E[j..k] >= R
    best = np.full(m + 1, m, np.int64)
    for k in range(m):
        if last_far[k] >= 0:
            best[last_far[k]] = min(best[last_far[k]], k)
    U = np.empty(m, np.int64)
    cur = m
    for j in range(m - 1, -1, -1):
        cur = min(cur, best[j])
        U[j] = cur
    return LF, U


@njit(cache=True)
def _check(E, n0, ring, i, j, Uj, rho, bx, by):
    px, py, qx, qy = E[i, 0], E[i, 1], E[j, 0], E[j, 1]
    # the pocket keeps away from the target
    if _seg_dist(bx, by, px, py, qx, qy) <= rho:
        return False
    for k in range(i, j):
        if _seg_dist(bx, by, E[k, 0], E[k, 1], E[k + 1, 0], E[k + 1, 1]) <= rho:
            return False
    # C is a crosscut of the slit domain
    for k in range(n0, j):
        if _hits(px, py, qx, qy, E[k, 0], E[k, 1], E[k + 1, 0], E[k + 1, 1]):
            return False
    for k in range(len(ring) - 1):
        if _hits(px, py, qx, qy, ring[k, 0], ring[k, 1], ring[k + 1, 0], ring[k + 1, 1]):
            return False
    # the curve leaves the tip into the pocket
    # (first later point off C, so a step running along C does not decide)
    k = j + 1
    while k < len(E) - 1 and _seg_dist(E[k, 0], E[k, 1], px, py, qx, qy) <= 1e-9:
        k += 1
    mx = 0.5 * (E[k - 1, 0] + E[k, 0])
    my = 0.5 * (E[k - 1, 1] + E[k, 1])
    if _seg_dist(mx, my, px, py, qx, qy) <= 1e-9:
        mx, my = E[k, 0], E[k, 1]
    inside = False
    for k in range(i, j + 1):
        ax, ay = E[k, 0], E[k, 1]
        if k < j:
            cx, cy = E[k + 1, 0], E[k + 1, 1]
        else:
            cx, cy = px, py
        if (ay > my) != (cy > my):
            if mx < ax + (my - ay) * (cx - ax) / (cy - ay):
                inside = not inside
    if not inside:
        return False
    # and stays in it until its diameter reaches R
    for k in range(j, min(Uj, len(E) - 1)):
        if _hits(px, py, qx, qy, E[k, 0], E[k, 1], E[k + 1, 0], E[k + 1, 1]):
            return False
    return True


@njit(cache=True)
def _scan(E, n0, ring, r, R, rho, bx, by, complete, step):
    LF, U = _far_tables(E, R)
    m = len(E)
    for j in range(n0 + 1, m - 1):
        Uj = U[j]
        if Uj >= m:
            continue
        if complete:
            # the curve must come back to the mouth after going far
            back = False
            for k in range(Uj, m):
                if np.hypot(E[k, 0] - E[j, 0], E[k, 1] - E[j, 1]) <= r + step:
                    back = True
                    break
            if not back:
                continue
        # closest point of each run of path points within r of the tip
        i = min(j - 1, LF[j])
        while i >= 0:
            d = np.hypot(E[i, 0] - E[j, 0], E[i, 1] - E[j, 1])
            if d > r:
                i -= 1
                continue
            bi, bd = i, d
            while i >= 0:
                d = np.hypot(E[i, 0] - E[j, 0], E[i, 1] - E[j, 1])
                if d > r:
                    break
                if d < bd:
                    bi, bd = i, d
                i -= 1
            if _check(E, n0, ring, bi, j, Uj, rho, bx, by):
                return bi, j, Uj
    return -1, -1, -1


def _arcs(d: DiscreteDomain, spacing: float):
    """Left and right boundary arcs, each sampled and ordered from b to a."""
    cache = d.meta.setdefault("_arcs", {})
    if spacing not in cache:
        cache[spacing] = _arcs_uncached(d, spacing)
    return cache[spacing]


def _arcs_uncached(d: DiscreteDomain, spacing: float):
    ring = d.polygon().exterior
    if not ring.is_ccw:
        ring = shapely.reverse(ring)
    P = ring.length
    sa = ring.project(shapely.Point(d.a.real, d.a.imag))
    sb = ring.project(shapely.Point(d.b.real, d.b.imag))
    left_len = np.mod(sa - sb, P)
    tl = sb + np.linspace(0, left_len, max(2, int(np.ceil(left_len / spacing)) + 1))
    right_len = P - left_len
    tr = sb - np.linspace(0, right_len, max(2, int(np.ceil(right_len / spacing)) + 1))
    pts = lambda t: shapely.get_coordinates(shapely.line_interpolate_point(ring, np.mod(t, P)))
    return pts(tl)[:-1], pts(tr)[:-1], np.asarray(ring.coords)


def detect_six_arm(curve, domain: DiscreteDomain, r: float, R: float, rho: float | None = None,
                   check_pre: bool = True):
    """(found, witness) for the fjord event E(r, R); witness is None if not found.

    rho defaults to R.  The reduction needs r small against rho and R; this
    check accepts r <= min(rho, R) / 2.
    """
    rho = R if rho is None else float(rho)
    if not (r > 0 and R > 0 and rho > 0):
        raise InvalidInput("r, R and rho must be positive")
    if check_pre and r > min(rho, R) / 2:
        raise InvalidInput("need r <= min(rho, R) / 2")
    pts = curve.points if hasattr(curve, "points") else np.asarray(curve, dtype=float)
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return False, None
    step = float(np.max(np.hypot(*np.diff(pts, axis=0).T)))
    left, right, ring = _arcs(domain, min(0.25, r / 4))
    complete = abs(complex(*pts[-1]) - domain.b) <= step
    for arc in (left, right):
        E = np.ascontiguousarray(np.concatenate([arc, pts]))
        n0 = len(arc)
        i, j, Uj = _scan(E, n0, ring, float(r), float(R), rho, domain.b.real, domain.b.imag, complete, step)
        if i < 0:
            continue
        p, q = E[i], E[j]
        t = len(E) - 1
        for k in range(Uj, len(E) - 1):
            if _hits(p[0], p[1], q[0], q[1], E[k, 0], E[k, 1], E[k + 1, 0], E[k + 1, 1]):
                t = k
                break
        w = SixArmWitness(j - n0, t - n0, (tuple(map(float, p)), tuple(map(float, q))), bool(i < n0))
        return True, w
    return False, None


def count_multiple_crossings(ensemble, annuli, n: int, model: str = "curve", shape: str = "custom") -> CrossingReport:
    """P(at least n crossings) per annulus: each curve is one trial per annulus."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    if isinstance(annuli, Annulus):
        annuli = [annuli]
    rep = CrossingReport(meta={"model": model, "shape": shape, "samples": 0, "kind": "multiple-crossings",
                               "n": n})
    for c in ensemble:
        pts = c.points if hasattr(c, "points") else np.asarray(c, dtype=float)
        for a in annuli:
            key = (model, shape, float(a.z0[0]), float(a.z0[1]), float(a.r), float(a.R), f"n>={n}",
                   "time-zero")
            rep.add(key, True, count_crossings(pts, a).total >= n)
        rep.meta["samples"] += 1
    return rep


def ratio_rows(rep: CrossingReport) -> list:
    """(r/R, hits, trials) pooled over cells with the same ratio."""
    pool = {}
    for row in rep.rows():
        q = round(row["r"] / row["R"], 12)
        t = pool.setdefault(q, [0, 0])
        t[0] += row["hits"]
        t[1] += row["trials"]
    return [(q, h, t) for q, (h, t) in sorted(pool.items())]


def multiple_crossing_exponents(ensemble, annuli, ns=(1, 3, 5), **kw) -> dict:
    """Fitted (K, Delta_n) of P(>= n crossings) against r/R, for each n."""
    curves = [c.points if hasattr(c, "points") else np.asarray(c, dtype=float) for c in ensemble]
    out = {}
    for n in ns:
        out[n] = fit_power_law(ratio_rows(count_multiple_crossings(curves, annuli, n, **kw)))
    return out
