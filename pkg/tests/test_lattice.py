import itertools
import math

import numpy as np
import pytest
from scipy import stats

from loewner_lab.geometry import InvalidInput
from loewner_lab.lattice import (
    ConditioningError,
    EdgeConfig,
    component_count,
    domain_from_spec,
    harmonic_solve,
    random_walk,
    square_box,
    triangular_blob,
    triangular_corridor,
    triangular_rhombus,
)


def path_graph_domain(n):
    # a 1 x n corridor of the square lattice: box m=n-1, n=0
    return square_box(n - 1, 0)


def test_harmonic_path_graph_linear():
    n = 9
    d = path_graph_domain(n)
    bnd = {0: 1.0, n - 1: 0.0}
    # interior of a zero-height box is everything but the ends
    d.boundary[:] = False
    d.boundary[[0, n - 1]] = True
    f = harmonic_solve(d, bnd)
    x = d.coords[:, 0]
    assert np.abs(f.values - (1 - x / (n - 1))).max() < 1e-10


def test_harmonic_square_midline():
    n = 9
    d = square_box(n - 1, n - 1)
    x = d.coords[:, 0]
    # top and bottom rows interpolate linearly, so the midline is exactly 1/2
    bnd = {v: (1 - x[v] / (n - 1)) for v in np.nonzero(d.boundary)[0]}
    f = harmonic_solve(d, bnd)
    mid = x == (n - 1) / 2
    assert np.abs(f.values[mid] - 0.5).max() < 1e-10


def test_harmonic_matches_dense_solve():
    d = square_box(3, 3)
    rng = np.random.default_rng(1)
    bnd = {int(v): float(rng.random()) for v in np.nonzero(d.boundary)[0]}
    f = harmonic_solve(d, bnd)
    inner = np.nonzero(~d.boundary)[0]
    A = np.zeros((len(inner), len(inner)))
    rhs = np.zeros(len(inner))
    pos = {v: k for k, v in enumerate(inner)}
    for k, v in enumerate(inner):
        nb = d.neighbors(v)
        A[k, k] = len(nb)
        for y in nb:
            if y in pos:
                A[k, pos[y]] -= 1
            else:
                rhs[k] += bnd[int(y)]
    want = np.linalg.solve(A, rhs)
    assert np.abs(f.values[inner] - want).max() < 1e-8


def test_harmonic_mean_value_and_max_principle():
    d = triangular_rhombus(12)
    f = harmonic_solve(d)
    inner = np.nonzero(~d.boundary)[0]
    for v in inner:
        assert abs(f.values[v] - f.values[d.neighbors(v)].mean()) < 1e-10
    assert np.all((f.values[inner] > 0) & (f.values[inner] < 1))
    # reflection across the a-b diagonal swaps the arcs up to the two corners
    lut = d.meta["lookup"]
    mid = [lut[(i, i)] for i in range(1, 11)]
    assert np.all(np.abs(f.values[mid] - 0.5) < 0.05)


def test_harmonic_partition_must_cover_boundary():
    d = square_box(3, 3)
    with pytest.raises(InvalidInput):
        harmonic_solve(d, {0: 1.0})


def test_harmonic_disconnected_component_warns():
    from loewner_lab.lattice import _csr, solve_dirichlet

    # 0 - 1 and 2 - 3; only site 0 is fixed, so {2, 3} never sees a boundary
    indptr, indices = _csr(4, [(0, 1), (2, 3)])
    free = np.array([False, True, True, True])
    with pytest.warns(UserWarning):
        vals, _ = solve_dirichlet(indptr, indices, free, np.array([0.7, 0, 0, 0]))
    assert vals[1] == pytest.approx(0.7)
    assert np.isnan(vals[2:]).all()


def test_empty_interior():
    d = triangular_corridor(5)
    f = harmonic_solve(d)
    assert not f.interior.any()


def dfs_components(n, edges):
    adj = {v: [] for v in range(n)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = set()
    k = 0
    for s in range(n):
        if s in seen:
            continue
        k += 1
        stack = [s]
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(adj[x])
    return k


def test_component_count_trivial():
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]
    cfg = EdgeConfig(6, edges, np.zeros(7, bool), None)
    assert component_count(cfg) == 6
    cfg = EdgeConfig(6, edges, np.ones(7, bool), None)
    assert component_count(cfg) == 1


def test_component_count_dfs_oracle():
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]
    for bits in ([1, 0, 0, 1, 0, 0, 0], [0, 1, 0, 0, 1, 0, 1], [1, 1, 0, 0, 0, 1, 0]):
        open_ = np.array(bits, bool)
        cfg = EdgeConfig(6, edges, open_, None)
        want = dfs_components(6, [e for e, o in zip(edges, bits) if o])
        assert component_count(cfg) == want
        # wiring 0 with 3 merges their clusters
        wired = dfs_components(6, [e for e, o in zip(edges, bits) if o] + [(0, 3)])
        assert component_count(cfg, [[0, 3]]) == wired


def test_component_count_order_invariant():
    rng = np.random.default_rng(0)
    edges = np.array([(u, v) for u in range(8) for v in range(u + 1, 8)])
    open_ = rng.random(len(edges)) < 0.2
    base = component_count(EdgeConfig(8, edges, open_, None))
    for _ in range(5):
        p = rng.permutation(len(edges))
        assert component_count(EdgeConfig(8, edges[p], open_[p], None)) == base


def test_wired_must_be_open():
    with pytest.raises(InvalidInput):
        EdgeConfig(2, [(0, 1)], [False], [True])


def test_corridor_h_walk_forced():
    # width-one square corridor: the walk may backtrack (h(k) = k/6 is a
    # birth-death chain) but never leaves the corridor and always ends at b
    d = square_box(2, 6, a=(1, 0), b=(1, 6))
    h = harmonic_solve(d)
    for seed in range(20):
        p = random_walk(d, d.meta["a_index"], h, np.random.default_rng(seed))
        assert np.all(d.coords[p, 0] == 1.0)
        assert p[-1] == d.meta["b_index"]
        assert np.all(np.abs(np.diff(d.coords[p, 1])) == 1)


def test_srw_exit_sides_uniform():
    d = square_box(10, 10)
    centre = 5 * 11 + 5
    rng = np.random.default_rng(3)
    counts = np.zeros(4)
    for _ in range(10_000):
        x, y = d.coords[random_walk(d, centre, None, rng)[-1]]
        side = 0 if y == 0 else 1 if x == 10 else 2 if y == 10 else 3
        counts[side] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_h_walk_hits_target_and_step_marginals():
    d = square_box(4, 4)
    h = harmonic_solve(d)
    a, b = d.meta["a_index"], d.meta["b_index"]
    rng = np.random.default_rng(5)
    firsts = {}
    for _ in range(1000):
        p = random_walk(d, a, h, rng)
        assert p[-1] == b
        firsts[int(p[1])] = firsts.get(int(p[1]), 0) + 1
    # absorbing-chain: P(first step = y) proportional to h(y)
    nb = d.neighbors(a)
    w = h.values[nb] / h.values[nb].sum()
    for y, pw in zip(nb, w):
        got = firsts.get(int(y), 0) / 1000
        assert abs(got - pw) < 3 * math.sqrt(pw * (1 - pw) / 1000) + 1e-9


def test_h_zero_raises():
    d = square_box(4, 4)
    with pytest.raises(ConditioningError):
        random_walk(d, 12, np.zeros(d.n_sites), np.random.default_rng(0))


def no_loop_exit(rng, r, R, n):
    # SRW from radius sqrt(rR) until it leaves A(0, r, R); a sub-path is
    # non-nullhomotopic exactly when the range of the winding angle reaches 2 pi
    start = int(round(math.sqrt(r * R)))
    pos = np.tile([start, 0], (n, 1)).astype(np.int64)
    ang = np.zeros(n)
    lo = np.zeros(n)
    hi = np.zeros(n)
    alive = np.ones(n, bool)
    steps = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    while alive.any():
        idx = np.nonzero(alive)[0]
        old = pos[idx]
        new = old + steps[rng.integers(0, 4, len(idx))]
        ang[idx] += np.angle((new[:, 0] + 1j * new[:, 1]) / (old[:, 0] + 1j * old[:, 1]))
        lo[idx] = np.minimum(lo[idx], ang[idx])
        hi[idx] = np.maximum(hi[idx], ang[idx])
        pos[idx] = new
        rad = np.hypot(new[:, 0], new[:, 1])
        alive[idx[(rad <= r) | (rad >= R)]] = False
    return hi - lo < 2 * np.pi


def test_beurling_power_law():
    rng = np.random.default_rng(7)
    r = 4
    ratios = [1 / 4, 1 / 8, 1 / 16]
    freqs = [no_loop_exit(rng, r, int(r / q), 4000).mean() for q in ratios]
    # the constant K is large at these ratios, so only the trend is visible
    assert all(a >= b for a, b in zip(freqs, freqs[1:]))
    assert freqs[0] > freqs[-1]
    slope, _ = np.polyfit(np.log(ratios), np.log(freqs), 1)
    assert slope > 0


def test_triangular_domain_admissibility():
    d = triangular_rhombus(5)
    assert d.boundary.sum() == 4 * 5 - 4
    # a and b are the outer corners of the marked edges
    assert d.a.real < 0.5 and d.b.real > 5
    with pytest.raises(InvalidInput):
        domain_from_spec({"kind": "hexagonal", "shape": "rhombus", "n": 5})
    with pytest.raises(InvalidInput):
        triangular_rhombus(2)
    blob = triangular_blob([(0, 0), (1, 0), (0, 1)], 0, 4)
    assert (~blob.boundary).sum() == 3
    assert blob.contains([[0.0, 0.0], [10.0, 10.0]]).tolist() == [True, False]


def test_domain_spec_roundtrip():
    d = triangular_rhombus(6)
    import json

    d2 = domain_from_spec(json.loads(d.to_json()))
    assert np.array_equal(d2.coords, d.coords)
    assert d2.a == d.a and d2.b == d.b
