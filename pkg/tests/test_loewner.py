import math

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon, box

from loewner_lab.geometry import Curve, InvalidInput, curve_distance
from loewner_lab.loewner import (
    DrivingFunction,
    ResolutionError,
    extract_driving,
    geodesic_to_tip,
    hcap,
    map_out,
    solve_trace,
    zip_curve,
)


def brownian(seed, kappa, T, dt):
    rng = np.random.default_rng(seed)
    n = int(round(T / dt))
    t = np.arange(n + 1) * dt
    w = np.concatenate([[0.0], np.cumsum(rng.normal(size=n)) * math.sqrt(kappa * dt)])
    return DrivingFunction(t, w)


def test_zero_driving_is_vertical_slit():
    w = DrivingFunction([0.0, 1.0], [0.0, 0.0])
    c = solve_trace(w, dt=0.01)
    t = c.meta["times"]
    assert np.abs(c.z - 2j * np.sqrt(t)).max() < 1e-12


def test_zero_driving_with_tip_offset():
    w = DrivingFunction([0.0, 1.0], [0.0, 0.0])
    eps = 1e-3
    c = solve_trace(w, dt=0.01, eps=eps)
    t = c.meta["times"]
    assert np.abs(c.z - 2j * np.sqrt(t)).max() <= 5 * eps


def test_translation_equivariance():
    base = brownian(2, 2.0, 0.1, 1e-3)
    shifted = DrivingFunction(base.times, base.values + 0.75)
    a = solve_trace(base).z
    b = solve_trace(shifted).z
    assert np.abs(b - (a + 0.75)).max() < 1e-12
    const = solve_trace(DrivingFunction([0.0, 1.0], [0.3, 0.3]), dt=0.01).z
    ref = solve_trace(DrivingFunction([0.0, 1.0], [0.0, 0.0]), dt=0.01).z
    assert np.abs(const - ref - 0.3).max() < 1e-12


def test_linear_driving_self_convergence():
    w = DrivingFunction([0.0, 1.0], [0.0, 1.0])
    dt = 1e-3
    c = solve_trace(w, dt=dt, estimate_error=True)
    half = solve_trace(w, dt=dt / 2)
    diff = np.abs(half.z[::2] - c.z).max()
    assert 0 < diff <= c.meta["error_estimate"]


def test_bad_inputs():
    with pytest.raises(InvalidInput):
        DrivingFunction([0.0, 0.2, 0.1], [0, 0, 0])
    with pytest.raises(ResolutionError):
        solve_trace(DrivingFunction([0.0, 1.0], [0.0, 0.0]), dt=0.1, eps=1e-13)
    with pytest.raises(InvalidInput):
        extract_driving([[0, 0], [0, 1], [1, -0.1], [2, 1]])
    with pytest.raises(InvalidInput):
        extract_driving([[0, 0.5], [0, 1]])


def test_vertical_segment_extraction():
    x0, h = 0.37, 1.3
    y = np.linspace(0, h, 400)
    d = extract_driving(np.column_stack([np.full_like(y, x0), y]))
    assert np.abs(d.values - x0).max() < 1e-6
    assert d.T == pytest.approx(h * h / 4, rel=1e-10)


def test_scaling_covariance():
    c = solve_trace(brownian(5, 3.0, 0.2, 1e-3))
    d1 = extract_driving(c)
    for s in (0.5, 2.0, 3.0):
        d2 = extract_driving(c.points * s)
        assert np.allclose(d2.values, s * d1.values, atol=1e-9 * s)
        assert np.allclose(d2.times, s * s * d1.times, rtol=1e-9)


def test_brownian_round_trip():
    T = 0.25
    w = brownian(11, 2.0, T, 1e-4)
    c = solve_trace(w)
    d = extract_driving(c, tol=1e-2)
    keep = d.times <= 0.9 * T
    assert np.abs(d.values[keep] - w(d.times[keep])).max() < 1e-2
    assert d.meta["roundtrip_error"] < 1e-6


def test_capacity_additivity():
    c = solve_trace(brownian(3, 2.0, 0.1, 1e-3))
    T, _ = zip_curve(c)
    k = 40
    rest = map_out(c, k)
    T2, W2 = zip_curve(rest)
    assert rest.meta["t0"] + T2[-1] == pytest.approx(T[-1], abs=1e-6)


def test_capacity_monotone_along_prefixes():
    c = solve_trace(brownian(4, 4.0, 0.1, 1e-3))
    T, _ = zip_curve(c)
    assert np.all(np.diff(T) > 0)


def test_slit_capacity_exact():
    r = hcap(Curve([[0, 0], [0, 1]]))
    assert r.method == "zipper"
    assert r.hcap == pytest.approx(0.5, abs=1e-12)
    r = hcap(Curve([[0.2, 0], [0.2, 2.0]]))
    assert r.hcap == pytest.approx(2.0, abs=1e-12)


def test_harmonic_oracle_matches_closed_form_slit():
    r = hcap(LineString([(0, 0), (0, 1)]))
    assert r.method == "harmonic-oracle"
    assert abs(r.hcap - 0.5) <= max(r.error, 5e-3)


def test_harmonic_oracle_agrees_with_zipper_on_square():
    n = 300
    gap = 1e-4
    left = np.column_stack([np.full(n, -0.5), np.linspace(0, 1, n)])
    top = np.column_stack([np.linspace(-0.5, 0.5, n), np.ones(n)])[1:]
    right = np.column_stack([np.full(n, 0.5), np.linspace(1, gap, n)])[1:]
    z = hcap(Curve(np.concatenate([left, top, right])))
    h = hcap(box(-0.5, 0, 0.5, 1))
    assert h.hcap == pytest.approx(z.hcap, rel=5e-3)


def hull_corpus():
    rng = np.random.default_rng(2024)
    hulls = []
    for i in range(8):
        # star-shaped polygons sitting on [-1, 1]
        k = 9
        th = np.linspace(0, np.pi, k)
        rad = 0.3 + rng.random(k) * 1.5
        pts = [(-rad[0], 0.0)] + [(-r * math.cos(a), r * math.sin(a)) for r, a in zip(rad[1:-1], th[1:-1])]
        pts += [(rad[-1], 0.0)]
        hulls.append(Polygon(pts))
    for i in range(4):
        w, h = rng.uniform(0.2, 3), rng.uniform(0.2, 3)
        x = rng.uniform(-1, 1)
        hulls.append(box(x, 0, x + w, h))
    for i in range(8):
        hulls.append(Curve(solve_trace(brownian(100 + i, rng.uniform(0.5, 6), 0.2, 2e-3)).points))
    return hulls


def test_capacity_lower_bound_on_corpus():
    for K in hull_corpus():
        if isinstance(K, Curve):
            h = K.points[:, 1].max()
        else:
            h = K.bounds[3]
        r = hcap(K)
        assert r.hcap >= h * h / 4


def test_capacity_scaling():
    poly = Polygon([(-1, 0), (-0.5, 1.2), (0.3, 0.7), (1, 0)])
    base = hcap(poly)
    from shapely import affinity

    for s in (0.5, 2.0, 3.0):
        r = hcap(affinity.scale(poly, s, s, origin=(0, 0)))
        assert r.hcap == pytest.approx(s * s * base.hcap, abs=s * s * (base.error + r.error / (s * s)))
    c = Curve(solve_trace(brownian(9, 2.0, 0.1, 1e-3)).points)
    zb = hcap(c).hcap
    for s in (0.5, 2.0, 3.0):
        assert hcap(Curve(c.points * s)).hcap == pytest.approx(s * s * zb, rel=1e-9)


def test_unbounded_rejected():
    with pytest.raises(InvalidInput):
        hcap(Curve([[0, 0], [0, np.inf]]))


def test_geodesic_field_zero_driving():
    w = DrivingFunction([0.0, 1.0], [0.0, 0.0]).on_grid(0.01)
    f = geodesic_to_tip(w, 1.0, 2.0, grid=(11, 9))
    T, Y = np.meshgrid(f.times, f.heights, indexing="ij")
    assert np.abs(f.values - 1j * np.sqrt(Y**2 + 4 * T)).max() < 1e-12


def test_geodesic_field_far_from_hull():
    w = brownian(1, 2.0, 0.2, 1e-3)
    ys = [1.0, 2.0, 4.0, 8.0, 16.0]
    errs = []
    for Y in ys:
        f = geodesic_to_tip(w, 0.2, Y, grid=(5, 2))
        errs.append(np.abs(f.values[:, -1] - (w(f.times) + 1j * Y)).max())
    assert all(a > b for a, b in zip(errs, errs[1:]))
    # g_t^{-1}(z) = z - 2t / z + ..., so the offset is about 2T / Y
    assert errs[-1] < 4 * 0.2 / ys[-1]


def test_geodesic_field_modulus_of_continuity():
    w = brownian(7, 8.0 / 3.0, 0.2, 2e-4)
    f = geodesic_to_tip(w, 0.2, 0.2, grid=(60, 41))
    F = f.values
    sups = []
    for step in (16, 8, 4, 2, 1):
        sups.append(np.abs(F[:, step:] - F[:, :-step]).max())
    assert all(a > b for a, b in zip(sups, sups[1:]))
    # y = 0 is the tip
    tips = solve_trace(w.restrict(0.2)).z
    ks = np.searchsorted(w.times, f.times)
    assert np.abs(F[:, 0] - tips[ks]).max() < 1e-12


def test_driving_csv_roundtrip():
    w = brownian(1, 2.0, 0.01, 1e-3)
    back = DrivingFunction.from_csv(w.to_csv())
    assert np.array_equal(back.times, w.times)
    assert np.array_equal(back.values, w.values)
