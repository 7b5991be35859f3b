"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Slow (about 40 minutes on one core).  Known shortfalls are strict xfails.
"""
import filecmp
import json
import math
import os
import time

import numpy as np
import pytest
from shapely.geometry import Point, box

from loewner_lab.cli import run
from loewner_lab.conditions import (
    annulus_grid,
    check_condition_G2,
    convert_constants,
    cut_annulus,
    detect_six_arm,
    fit_power_law,
    modulus_quad,
    multiple_crossing_exponents,
    ratio_rows,
    rectangle,
)
from loewner_lab.geometry import Annulus, Curve, curve_distance
from loewner_lab.lattice import EdgeConfig, square_box, triangular_rhombus
from loewner_lab.loewner import extract_driving, hcap, solve_trace
from loewner_lab.models import HeatBath, P_SD_ISING, ModelSpec, sample, ust_tree
from loewner_lab.models.lerw import lerw_harmonic, lerw_path
from loewner_lab.models.square import box_edges
from loewner_lab.rng import job_rng, job_seed
from loewner_lab.sle import (
    SleSpec,
    common_grid,
    estimate_kappa,
    kappa_continuity_experiment,
    lattice_driving,
    sample_sle_driving,
    strictly_decreasing,
)
from test_loewner import hull_corpus
from test_models import empirical, enumerate_trees, fk_exact, kirchhoff, lerw_oracle, tree_key, tv

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def percolation_64():
    d = triangular_rhombus(64)
    return d, [sample(ModelSpec("percolation", d, seed=job_seed(2024, i))) for i in range(1000)]


# 1 -----------------------------------------------------------------------------


def test_c1_round_trip(record):
    t0 = time.time()
    worst = 0.0
    for i in range(50):
        w = sample_sle_driving(SleSpec(2.0, 0.5, 1e-4, job_seed(1, i)))
        c = solve_trace(w)
        again = solve_trace(extract_driving(c))
        worst = max(worst, curve_distance(c, again, 2e-3))
    took = time.time() - t0
    ok = worst <= 1e-2 and took <= 300
    record(1, "round trip", ok, f"max distance {worst:.2e} (<= 1e-2), {took:.0f}s (<= 300s)")
    assert ok


# 2 -----------------------------------------------------------------------------


def test_c2_slit_and_corpus(record):
    slit = hcap(Curve([[0.0, 0.0], [0.0, 1.0]])).hcap
    ok_slit = abs(slit - 0.5) <= 1e-4
    record(2, "slit", ok_slit, f"hcap {slit:.6f} (0.5 +- 1e-4)")
    margins = []
    for K in hull_corpus():
        h = K.points[:, 1].max() if isinstance(K, Curve) else K.bounds[3]
        margins.append(hcap(K).hcap / (h * h / 4))
    ok_corpus = len(margins) == 20 and min(margins) >= 1
    record(2, "corpus", ok_corpus, f"min hcap/(h^2/4) {min(margins):.3f} over {len(margins)} hulls")
    assert ok_slit and ok_corpus


@pytest.mark.xfail(strict=True, reason="flat rectangles have hcap ~ w h / pi, twice the quoted prefactor")
def test_c2_flat_rectangle(record):
    w, h = 100.0, 2.0
    rep = hcap(box(-w / 2, 0, w / 2, h))
    ratio = rep.hcap / (w * h / (2 * math.pi))
    ok = 0.9 <= ratio <= 1.1
    record(2, "rectangle h/w=0.02", ok, f"ratio {ratio:.3f} (full width convention; need [0.9, 1.1])",
           expected_fail=True)
    assert ok


# 3 -----------------------------------------------------------------------------


def test_c3_exact_enumeration(record):
    t0 = time.time()
    m = n = 2
    law = fk_exact(m, n, P_SD_ISING, 2.0)
    edges, wired = box_edges(m, n)
    hb = HeatBath(EdgeConfig(9, edges, wired.copy(), wired), P_SD_ISING, 2.0)
    hb.run(1000, job_rng(1))
    codes = hb.run(1_000_000, job_rng(2), record=True)
    vals, cnt = np.unique(codes, return_counts=True)
    tv_fk = tv({int(v): c / len(codes) for v, c in zip(vals, cnt)}, law)

    d = square_box(4, 4)
    oracle = lerw_oracle(d)
    hf, rng = lerw_harmonic(d), job_rng(12)
    tv_lerw = tv(empirical([tuple(lerw_path(d, rng, hf).tolist()) for _ in range(100_000)]), oracle)

    trees = enumerate_trees(1, 1)
    N = 100_000
    rng = job_rng(5)
    emp = empirical([tree_key(*ust_tree(1, 1, rng)) for _ in range(N)])
    u = 1 / kirchhoff(1, 1)
    z = max(abs(emp.get(t, 0.0) - u) / math.sqrt(u * (1 - u) / N) for t in trees)
    took = time.time() - t0
    ok = tv_fk <= 0.02 and tv_lerw <= 0.02 and z <= 3 and set(emp) == set(trees) and took <= 600
    record(3, "exact laws", ok, f"FK TV {tv_fk:.4f}, LERW TV {tv_lerw:.4f}, UST max |z| {z:.2f}, {took:.0f}s")
    assert ok


# 4 -----------------------------------------------------------------------------

C4_SECONDS = {}


@pytest.mark.xfail(strict=True, reason="percolation unforced crossings at C=8 exceed 1/2 on near-boundary annuli")
def test_c4_percolation(record):
    t0 = time.time()
    rep = check_condition_G2("percolation", triangular_rhombus(64), C=8, n_samples=2000, seed=0)
    s = rep.summary()
    w = s["worst_cell"]
    ok = s["verdict"] == "PASS"
    C4_SECONDS["percolation"] = time.time() - t0
    record(4, "percolation 64^2", ok, f"verdict {s['verdict']}, worst cell {w['hits']}/{w['trials']} ci_hi "
           f"{w['ci_hi']:.3f} at z0=({w['z0x']}, {w['z0y']}) r={w['r']}", expected_fail=True)
    assert ok


def test_c4_harmonic_explorer(record):
    t0 = time.time()
    rep = check_condition_G2("harmonic-explorer", triangular_rhombus(32), C=8, n_samples=500, seed=0)
    s = rep.summary()
    w = s["worst_cell"] or {"ci_hi": float("nan")}
    ok = s["verdict"] == "PASS" and s["conclusive_cells"] > 0
    C4_SECONDS["harmonic-explorer"] = time.time() - t0
    record(4, "harmonic explorer 32^2", ok, f"verdict {s['verdict']}, {s['conclusive_cells']} conclusive cells, "
           f"worst ci_hi {w['ci_hi']:.3f}, {time.time() - t0:.0f}s")
    assert ok


def test_c4_ust(record):
    t0 = time.time()
    d = square_box(32, 32, wired="bottom")
    rep = check_condition_G2("ust-peano", d, C=8, n_samples=200, seed=0)
    # annuli off the a-b line (the wired bottom row) that have avoidable components at time zero
    cells = [r for r in rep.rows() if r["tau_rule"] == "zero" and r["trials"] > 0 and r["z0y"] - r["R"] > 0]
    hits, trials = sum(r["hits"] for r in cells), sum(r["trials"] for r in cells)
    worst = min((r["hits"] / r["trials"] for r in cells), default=0.0)
    C4_SECONDS["ust"] = time.time() - t0
    took = sum(C4_SECONDS.values())
    ok = rep.verdict() == "FAIL" and bool(cells) and worst >= 0.99 and took <= 1800
    record(4, "UST Peano", ok, f"verdict {rep.verdict()}, {len(cells)} off-axis cells, pooled {hits}/{trials}, "
           f"min frequency {worst:.3f}; criterion 4 total {took:.0f}s (<= 1800s)")
    assert ok


# 5 -----------------------------------------------------------------------------


def bulk_annuli(d, R, rs, spacing=8.0):
    P = d.polygon()
    cent = [a.z0 for a in annulus_grid(d, 1.0, R, spacing)
            if P.contains(Point(a.z0)) and P.exterior.distance(Point(a.z0)) >= R]
    return [Annulus(z, r, R) for z in cent for r in rs]


def test_c5_power_laws(record, percolation_64):
    d, ens = percolation_64
    rows = []
    for C in (4, 8, 16):
        rows += ratio_rows(check_condition_G2("percolation", d, C=C, n_samples=150, seed=5, radii=[2.0]))
    fit = fit_power_law(rows)
    ok1 = fit.Delta > 0 and fit.Delta_lo > 0
    record(5, "Delta", ok1, f"{fit.Delta:.3f} CI [{fit.Delta_lo:.3f}, {fit.Delta_hi:.3f}] from {rows}")
    fits = multiple_crossing_exponents(ens, bulk_annuli(d, 16.0, (4.0, 2.0, 1.0)), (1, 3, 5),
                                       model="percolation")
    D = [fits[n].Delta for n in (1, 3, 5)]
    ok2 = all(np.isfinite(D)) and D[0] <= D[1] <= D[2]
    record(5, "Delta_n", ok2, "n=1,3,5: " + ", ".join(f"{x:.3f}" for x in D))
    assert ok1 and ok2


# 6 -----------------------------------------------------------------------------


def test_c6_constants(record):
    g3 = convert_constants("G2->G3", C=2)
    c2 = convert_constants("G2->C2", C=2)
    c3 = convert_constants("C3->G2", K=2, eps=2 * math.pi)
    ok = g3 == {"K": 2.0, "Delta": 1.0} and c2 == {"M": 36.0} and c3 == {"C": 4 * math.e ** 2}
    record(6, "converters", ok, f"{g3}, {c2}, {c3} vs C=4e^2={4 * math.e ** 2!r}")
    assert ok


# 7 -----------------------------------------------------------------------------


def test_c7_modulus(record):
    rect = {L: modulus_quad(rectangle(L, 1.0), refinement=4).value for L in (1.0, 2.0, 4.0)}
    ok_r = all(abs(v - L) <= 0.02 * L for L, v in rect.items())
    ann = {(r, R): modulus_quad(cut_annulus(r, R), refinement=4).value for r, R in ((1.0, 4.0), (1.0, 8.0))}
    ok_a = all(v >= math.log(R / r) / (2 * math.pi) for (r, R), v in ann.items())
    record(7, "modulus", ok_r and ok_a,
           "rectangles " + ", ".join(f"L={L:g}: {v:.4f}" for L, v in rect.items()) + "; annuli "
           + ", ".join(f"{k}: {v:.4f} >= {math.log(k[1] / k[0]) / (2 * math.pi):.4f}" for k, v in ann.items()))
    assert ok_r and ok_a


# 8 -----------------------------------------------------------------------------


def test_c8_kappa(record):
    ok = True
    parts = []
    for kappa in (2.0, 6.0):
        ens = [sample_sle_driving(SleSpec(kappa, 1.0, 0.01, job_seed(77, i))) for i in range(1000)]
        est = estimate_kappa(ens, n_boot=500)
        ok &= abs(est.kappa - kappa) <= 0.1 * kappa
        parts.append(f"synthetic {kappa:g}: {est.kappa:.3f}")
    d = square_box(64, 64)
    ds = [lattice_driving(sample(ModelSpec("lerw", d, seed=job_seed(8, i))), d) for i in range(500)]
    est = estimate_kappa(common_grid(ds, n=200), n_boot=500, reference="lerw")
    width = est.ci_hi - est.ci_lo
    ok &= width <= 1.5
    parts.append(f"LERW 64^2: {est.kappa:.3f} CI [{est.ci_lo:.3f}, {est.ci_hi:.3f}] width {width:.3f} "
                 f"(reference {est.reference['value']})")
    record(8, "kappa", ok, "; ".join(parts))
    assert ok


# 9 -----------------------------------------------------------------------------


def test_c9_continuity(record):
    rows = kappa_continuity_experiment(2.0, [0.5, 0.25, 0.125])
    dist = [r["mean_distance"] for r in rows]
    ok = strictly_decreasing(dist)
    record(9, "continuity", ok, "mean distances " + ", ".join(f"{x:.4f}" for x in dist))
    assert ok


# 10 ----------------------------------------------------------------------------


def test_c10_six_arm(record, percolation_64):
    d, ens = percolation_64
    rs = (8.0, 4.0, 2.0)
    counts = [0, 0, 0]
    for c in ens:
        for k, r in enumerate(rs):
            counts[k] += detect_six_arm(c, d, r, 16.0)[0]
    freq = [x / len(ens) for x in counts]
    ok = freq[0] > freq[1] > freq[2]
    record(10, "six-arm", ok, ", ".join(f"r={r:g}: {f:.3f}" for r, f in zip(rs, freq)))
    assert ok


# 11 ----------------------------------------------------------------------------


def cli_session(root, workers):
    os.makedirs(root, exist_ok=True)
    j = lambda *p: os.path.join(root, *p)
    with open(j("box.json"), "w") as fh:
        fh.write(square_box(20, 20).to_json())
    with open(j("wired.json"), "w") as fh:
        fh.write(square_box(16, 16, wired="bottom").to_json())
    with open(j("rh.json"), "w") as fh:
        fh.write(triangular_rhombus(24).to_json())
    w = ["--workers", str(workers)]
    calls = [
        ["sample", "--model", "lerw", "--domain", j("box.json"), "--n", "35", "--seed", "3", "--out", j("c.ndjson")],
        ["sample", "--model", "fk-ising", "--domain", j("wired.json"), "--n", "3", "--sweeps", "5",
         "--out", j("fk.ndjson")],
        ["extract-driving", "--curves", j("c.ndjson"), "--domain", j("box.json"), "--out", j("dr")],
        ["trace", "--kappa", "3", "--T", "0.1", "--seed", "2", "--out", j("t.ndjson")],
        ["trace", "--driving", j("dr", "driving-00000.csv"), "--out", j("t2.ndjson")],
        ["check-condition", "--model", "percolation", "--domain", j("rh.json"), "--n", "8", "--C", "4",
         "--out-csv", j("g1.csv"), "--out-json", j("g1.json")],
        ["check-condition", "--model", "percolation", "--domain", j("rh.json"), "--n", "8", "--C", "4",
         "--start", "8", "--out-csv", j("g2.csv"), "--out-json", j("g2.json")],
        ["merge", j("g1.csv"), j("g2.csv"), "--out", j("m.csv"), "--out-json", j("m.json")],
        ["capacity", "--shape", "slit", "--h", "1.5", "--out", j("cap.json")],
        ["capacity", "--shape", "curve", "--curve", j("t.ndjson"), "--out", j("cap2.json")],
        ["six-arm", "--domain", j("rh.json"), "--n", "6", "--r", "4,2", "--R", "8", "--out", j("six.json"),
         "--plot", j("six_plot.py")],
        ["kappa", "--drivings", j("dr"), "--boot", "50", "--out", j("k1.json"), "--stats-csv", j("k1.csv")],
        ["kappa", "--model", "lerw", "--domain", j("box.json"), "--n", "30", "--boot", "50", "--out", j("k2.json")],
        ["kappa", "--synthetic", "4", "--n", "40", "--boot", "50", "--out", j("k3.json")],
        ["continuity", "--deltas", "0.5,0.25", "--T", "0.2", "--dt", "4e-3", "--n-seeds", "3",
         "--out", j("cont.json")],
    ]
    codes = [run(c + w) for c in calls]
    return codes


def tree_files(root):
    out = []
    for base, _, files in os.walk(root):
        out += [os.path.relpath(os.path.join(base, f), root) for f in files]
    return sorted(out)


def test_c11_cli_determinism(record, tmp_path):
    a, b, c = (str(tmp_path / x) for x in ("w1", "w1-again", "w4"))
    codes = [cli_session(a, 1), cli_session(b, 1), cli_session(c, 4)]
    files = tree_files(a)
    same = files == tree_files(b) == tree_files(c)
    diff = [f for f in files if not (filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False)
                                     and filecmp.cmp(os.path.join(a, f), os.path.join(c, f), shallow=False))]
    ok_codes = codes[0] == codes[1] == codes[2] and all(x in (0, 2) for x in codes[0])
    with open(os.path.join(a, "k2.json")) as fh:
        seeded = json.load(fh)["base_seed"] == 0
    ok = same and not diff and ok_codes and seeded
    record(11, "determinism", ok, f"{len(files)} files, {len(diff)} differ across reruns and workers 1/4, "
           f"exit codes {codes[0]}")
    assert ok
