"""Command-line front end.

    loewner-lab <verb> [--config cfg.json] [options]

Verbs: sample, extract-driving, trace, check-condition, capacity, six-arm,
kappa, continuity, merge.  A config file is a JSON object whose keys are the
long option names (dashes or underscores); flags given on the command line
win.  Exit status: 0 success, 2 verdict FAIL (check-condition), 1 error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .geometry import Curve, InvalidInput, read_ndjson
from .jobs import run_jobs
from .rng import job_seed

CONFIG_SCHEMA = "experiment-config/1"


class ConfigError(InvalidInput):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes"):
        return True
    if str(text).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# verb -> [(option, type, default, help)]; default REQUIRED means mandatory
REQUIRED = object()
VERBS = {
    "sample": [
        ("model", str, REQUIRED, "percolation | harmonic-explorer | lerw | fk-ising | ust-peano"),
        ("domain", str, REQUIRED, "domain spec JSON file"),
        ("n", int, 100, "number of curves"),
        ("seed", int, 0, "base seed"),
        ("p", float, None, "edge/site parameter where the model has one"),
        ("sweeps", int, None, "FK heat-bath sweeps"),
        ("out", str, "-", "NDJSON output path ('-' for stdout)"),
    ],
    "extract-driving": [
        ("curves", str, REQUIRED, "NDJSON curves"),
        ("domain", str, None, "box domain of lattice curves; omit for curves already in H"),
        ("out", str, REQUIRED, "output directory for t,w CSV files"),
        ("wmax", float, 20.0, "cut lattice curves where their image leaves |w| <= wmax"),
        ("tol", float, None, "round-trip check tolerance"),
    ],
    "trace": [
        ("driving", str, None, "t,w CSV; omit to sample an SLE driving"),
        ("kappa", float, None, "SLE parameter when sampling"),
        ("T", float, 1.0, "capacity horizon when sampling"),
        ("dt", float, 1e-3, "time step when sampling"),
        ("seed", int, 0, "base seed"),
        ("eps", float, None, "tip offset"),
        ("out", str, "-", "NDJSON output path"),
    ],
    "check-condition": [
        ("model", str, REQUIRED, "model name"),
        ("domain", str, REQUIRED, "domain spec JSON file"),
        ("C", float, 8.0, "annulus ratio R / r"),
        ("n", int, 100, "number of curves"),
        ("seed", int, 0, "base seed"),
        ("start", int, 0, "first job index (for sharded runs)"),
        ("rule", str, "hits", "stopping rule: hits | zero"),
        ("radii", _floats, None, "inner radii, comma separated"),
        ("spacing", float, None, "annulus centre grid spacing (default R/2)"),
        ("min_trials", int, 30, "trials needed for a conclusive cell"),
        ("resamples", int, 0, "restart resamples per stop (percolation, HE)"),
        ("p", float, None, "model parameter"),
        ("sweeps", int, None, "FK heat-bath sweeps"),
        ("out_csv", str, None, "report CSV path"),
        ("out_json", str, None, "summary JSON path"),
    ],
    "capacity": [
        ("shape", str, "rect", "rect | slit | curve"),
        ("w", float, 1.0, "rectangle width"),
        ("h", float, 1.0, "height"),
        ("curve", str, None, "NDJSON file; the first curve is used with shape=curve"),
        ("out", str, "-", "JSON output path"),
    ],
    "six-arm": [
        ("model", str, "percolation", "model name"),
        ("domain", str, REQUIRED, "domain spec JSON file"),
        ("n", int, 100, "number of curves"),
        ("seed", int, 0, "base seed"),
        ("r", _floats, [8.0, 4.0, 2.0], "crosscut diameters, comma separated"),
        ("R", float, 16.0, "sub-curve diameter"),
        ("rho", float, None, "target neighbourhood radius (default R)"),
        ("out", str, "-", "JSON output path"),
        ("plot", str, None, "write a plotting script here"),
    ],
    "kappa": [
        ("drivings", str, None, "directory of t,w CSV files"),
        ("synthetic", float, None, "sample Brownian drivings with this kappa"),
        ("model", str, None, "sample lattice curves of this model and extract drivings"),
        ("domain", str, None, "box domain for --model"),
        ("n", int, 100, "ensemble size when sampling"),
        ("seed", int, 0, "base seed"),
        ("T", float, 1.0, "horizon of synthetic drivings"),
        ("dt", float, 1e-2, "step of synthetic drivings"),
        ("grid", int, 200, "common grid steps for lattice drivings"),
        ("boot", int, 500, "bootstrap resamples"),
        ("reference", str, None, "model name or value to compare with"),
        ("wmax", float, 20.0, "cut of lattice curve images"),
        ("out", str, "-", "JSON output path"),
        ("stats_csv", str, None, "per-time t,var,ac1 CSV path"),
        ("plot", str, None, "write a plotting script here"),
    ],
    "continuity": [
        ("kappa", float, 2.0, "base kappa"),
        ("deltas", _floats, [0.5, 0.25, 0.125], "kappa increments, comma separated"),
        ("T", float, 1.0, "capacity horizon"),
        ("dt", float, 1e-3, "time step"),
        ("n_seeds", int, 20, "coupled samples per delta"),
        ("seed", int, 0, "base seed"),
        ("out", str, "-", "JSON output path"),
        ("plot", str, None, "write a plotting script here"),
    ],
    "merge": [
        ("min_trials", int, 30, "trials needed for a conclusive cell"),
        ("out", str, "-", "merged report CSV path"),
        ("out_json", str, None, "summary JSON path"),
    ],
}
COMMON = [("config", str, None, "JSON config file"), ("workers", int, None, "worker processes")]


def build_parser():
    ap = argparse.ArgumentParser(prog="loewner-lab", description="Loewner chains and lattice interface experiments")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, opts in VERBS.items():
        sp = sub.add_parser(verb)
        for name, typ, _, hlp in opts + COMMON:
            sp.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=hlp)
        if verb == "merge":
            sp.add_argument("reports", nargs="+", help="report CSV files")
    return ap


def load_config(path: str, verb: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    schema = raw.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"{path}: field 'schema': expected {CONFIG_SCHEMA!r}, got {schema!r}")
    cv = raw.pop("verb", verb)
    if cv != verb:
        raise ConfigError(f"{path}: field 'verb': config is for {cv!r}, not {verb!r}")
    types = {name: typ for name, typ, _, _ in VERBS[verb] + COMMON}
    out = {}
    for key, val in raw.items():
        name = key.replace("-", "_")
        if name not in types or name == "config":
            raise ConfigError(f"{path}: field {key!r}: unknown for verb {verb!r}")
        try:
            out[name] = None if val is None else types[name](val)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}: field {key!r}: {e}") from None
    return out


def resolve(args) -> dict:
    """Flags over config over defaults."""
    cfg = load_config(args.config, args.verb) if args.config else {}
    out = {}
    for name, _, default, _ in VERBS[args.verb] + COMMON:
        v = getattr(args, name)
        if v is None:
            v = cfg.get(name, None if default is REQUIRED else default)
        if v is None and default is REQUIRED:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        out[name] = v
    if args.verb == "merge":
        out["reports"] = args.reports
    for key in ("domain", "curves", "driving", "drivings", "curve"):
        if out.get(key) and not os.path.exists(out[key]):
            raise ConfigError(f"--{key}: {out[key]} does not exist")
    return out


# ---------------------------------------------------------------- output helpers


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _curve_line(c: Curve, base_seed: int, index: int) -> str:
    rec = json.loads(c.to_json())
    rec["base_seed"] = int(base_seed)
    rec["index"] = int(index)
    return json.dumps(rec, separators=(",", ":"))


def _model_kw(o) -> dict:
    kw = {}
    if o.get("p") is not None:
        kw["p"] = o["p"]
    if o.get("sweeps") is not None:
        kw["sweeps"] = o["sweeps"]
    return kw


PLOT_SCRIPT = '''"""Plot {what} from {data}; run with python from any directory."""
import json
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, {data!r})) as fh:
    d = json.load(fh)
{body}
plt.savefig(os.path.join(here, {png!r}), dpi=150)
'''


def _plot(path, data, what, body):
    """Write a matplotlib script next to the data; paths inside are relative so reruns match."""
    if not path:
        return
    if data in (None, "-"):
        raise InvalidInput("--plot needs --out to name a file")
    rel = os.path.relpath(os.path.abspath(data), os.path.dirname(os.path.abspath(path)))
    png = os.path.splitext(os.path.basename(path))[0] + ".png"
    _write(path, PLOT_SCRIPT.format(what=what, data=rel, body=body, png=png))


# ---------------------------------------------------------------- jobs


def _sample_job(job):
    from .lattice import domain_from_spec
    from .models import ModelSpec, sample

    model, spec_json, kw, seed = job
    d = domain_from_spec(json.loads(spec_json))
    return sample(ModelSpec(model, d, seed=seed, **kw))


def _sixarm_job(job):
    from .conditions import detect_six_arm
    from .conditions.g2 import domain_cached
    from .models import ModelSpec, sample

    model, spec_json, kw, seed, rs, R, rho = job
    d = domain_cached(spec_json)
    c = sample(ModelSpec(model, d, seed=seed, **kw))
    out = []
    for r in rs:
        found, w = detect_six_arm(c, d, r, R, rho, check_pre=True)
        out.append(None if not found else {"s": w.s, "t": w.t, "crosscut": w.crosscut, "on_boundary": w.on_boundary})
    return out


def _lattice_driving_job(job):
    from .lattice import domain_from_spec
    from .sle import lattice_driving

    model, spec_json, seed, wmax = job
    d = domain_from_spec(json.loads(spec_json))
    c = _sample_job((model, spec_json, {}, seed))
    return lattice_driving(c, d, wmax=wmax)


# ---------------------------------------------------------------- verbs


def cmd_sample(o):
    from .lattice import load_domain

    d = load_domain(o["domain"])
    if o["n"] < 0:
        raise InvalidInput("--n must be >= 0")
    spec_json = d.to_json()
    jobs = [(o["model"], spec_json, _model_kw(o), job_seed(o["seed"], i)) for i in range(o["n"])]
    curves = run_jobs(_sample_job, jobs, o["workers"])
    _write(o["out"], "".join(_curve_line(c, o["seed"], i) + "\n" for i, c in enumerate(curves)))
    return 0


def _read_curves(path):
    with open(path) as fh:
        try:
            return list(read_ndjson(fh))
        except (json.JSONDecodeError, KeyError) as e:
            raise InvalidInput(f"{path}: bad NDJSON curve: {e}") from None


def cmd_extract_driving(o):
    from .lattice import load_domain
    from .loewner import extract_driving
    from .sle import lattice_driving

    curves = _read_curves(o["curves"])
    d = load_domain(o["domain"]) if o["domain"] else None
    os.makedirs(o["out"], exist_ok=True)
    files = []
    for i, c in enumerate(curves):
        try:
            w = lattice_driving(c, d, wmax=o["wmax"]) if d is not None else extract_driving(c, tol=o["tol"])
        except (InvalidInput, RuntimeError) as e:
            raise InvalidInput(f"curve {i}: {e}") from None
        name = f"driving-{i:05d}.csv"
        _write(os.path.join(o["out"], name), w.to_csv())
        files.append({"file": name, "seed": int(c.meta.get("seed", 0)), "T": w.T, "points": len(w.times)})
    _write(os.path.join(o["out"], "manifest.json"),
           _dump({"schema": "drivings/1", "source": os.path.basename(o["curves"]), "drivings": files}))
    return 0


def cmd_trace(o):
    from .loewner import DrivingFunction, solve_trace
    from .sle import SleSpec, sample_sle_driving

    if o["driving"]:
        with open(o["driving"]) as fh:
            try:
                w = DrivingFunction.from_csv(fh.read())
            except (KeyError, ValueError) as e:
                raise InvalidInput(f"{o['driving']}: {e}") from None
        c = solve_trace(w, eps=o["eps"])
        meta = {"model": "loewner-trace", "seed": 0}
    else:
        if o["kappa"] is None:
            raise ConfigError("trace needs --driving or --kappa")
        seed = job_seed(o["seed"], 0)
        w = sample_sle_driving(SleSpec(o["kappa"], o["T"], o["dt"], seed))
        c = solve_trace(w, eps=o["eps"])
        meta = {"model": f"sle-{o['kappa']!r}", "seed": seed}
    out = Curve(c.points, {**meta, "spacing": 0.0})
    _write(o["out"], _curve_line(out, o["seed"], 0) + "\n")
    return 0


def cmd_check_condition(o):
    from .conditions import check_condition_G2
    from .lattice import load_domain

    d = load_domain(o["domain"])
    rep = check_condition_G2(o["model"], d, C=o["C"], n_samples=o["n"], seed=o["seed"], rule=o["rule"],
                             radii=o["radii"], spacing=o["spacing"], min_trials=o["min_trials"],
                             resamples=o["resamples"], workers=o["workers"], model_kw=_model_kw(o),
                             start=o["start"])
    if o["out_csv"]:
        _write(o["out_csv"], rep.to_csv())
    summary = rep.to_json() + "\n"
    _write(o["out_json"] or "-", summary)
    return 2 if rep.verdict() == "FAIL" else 0


def cmd_capacity(o):
    from shapely.geometry import box

    from .loewner import hcap

    if o["shape"] == "rect":
        if not (o["w"] > 0 and o["h"] > 0):
            raise InvalidInput("--w and --h must be positive")
        rep = hcap(box(-o["w"] / 2, 0.0, o["w"] / 2, o["h"]))
        ref = o["w"] * o["h"] / (2 * math.pi)
        extra = {"w": o["w"], "h": o["h"], "ratio": rep.hcap / ref, "reference": "w h / (2 pi)",
                 "width_convention": "full width w"}
    elif o["shape"] == "slit":
        if not o["h"] > 0:
            raise InvalidInput("--h must be positive")
        rep = hcap(Curve(np.array([[0.0, 0.0], [0.0, o["h"]]])))
        extra = {"h": o["h"], "ratio": rep.hcap / (o["h"] ** 2 / 2), "reference": "h^2 / 2"}
    elif o["shape"] == "curve":
        if not o["curve"]:
            raise ConfigError("--shape curve needs --curve")
        rep = hcap(_read_curves(o["curve"])[0])
        extra = {"curve": os.path.basename(o["curve"])}
    else:
        raise ConfigError(f"--shape: unknown shape {o['shape']!r}")
    _write(o["out"], _dump({"schema": "capacity/1", "shape": o["shape"], "hcap": rep.hcap, "method": rep.method,
                            "error": rep.error, **extra}))
    return 0


def cmd_six_arm(o):
    from .conditions.report import wilson
    from .lattice import load_domain

    d = load_domain(o["domain"])
    rs = list(o["r"])
    rho = o["R"] if o["rho"] is None else o["rho"]
    spec_json = d.to_json()
    jobs = [(o["model"], spec_json, {}, job_seed(o["seed"], i), rs, o["R"], rho) for i in range(o["n"])]
    res = run_jobs(_sixarm_job, jobs, o["workers"])
    rows = []
    for k, r in enumerate(rs):
        hits = [i for i, row in enumerate(res) if row[k] is not None]
        lo, hi = wilson(len(hits), len(res))
        rows.append({"r": r, "events": len(hits), "samples": len(res), "frequency": len(hits) / max(1, len(res)),
                     "ci": [lo, hi], "first_witness": None if not hits else {"index": hits[0], **res[hits[0]][k]}})
    by_r = sorted(rows, key=lambda x: -x["r"])
    freq = [x["frequency"] for x in by_r]
    out = {"schema": "six-arm/1", "model": o["model"], "base_seed": o["seed"], "R": o["R"], "rho": rho,
           "rows": rows, "decreasing_in_r": all(b < a for a, b in zip(freq, freq[1:]))}
    _write(o["out"], _dump(out))
    _plot(o["plot"], o["out"], "six-arm frequencies",
          "rows = d['rows']\nplt.plot([r['r'] for r in rows], [r['frequency'] for r in rows], 'o-')\n"
          "plt.xlabel('r'); plt.ylabel('P(E(r, R))')")
    return 0


def cmd_kappa(o):
    from .loewner import DrivingFunction
    from .sle import SleSpec, common_grid, driving_tail_report, estimate_kappa, sample_sle_driving

    sources = [o["drivings"] is not None, o["synthetic"] is not None, o["model"] is not None]
    if sum(sources) != 1:
        raise ConfigError("kappa needs exactly one of --drivings, --synthetic, --model")
    if o["drivings"]:
        names = sorted(f for f in os.listdir(o["drivings"]) if f.endswith(".csv"))
        ds = []
        for f in names:
            with open(os.path.join(o["drivings"], f)) as fh:
                ds.append(DrivingFunction.from_csv(fh.read()))
        ds = common_grid(ds, n=o["grid"])
        source = {"drivings": len(ds)}
    elif o["synthetic"] is not None:
        ds = [sample_sle_driving(SleSpec(o["synthetic"], o["T"], o["dt"], job_seed(o["seed"], i)))
              for i in range(o["n"])]
        source = {"synthetic_kappa": o["synthetic"]}
    else:
        from .lattice import load_domain

        if not o["domain"]:
            raise ConfigError("--model needs --domain")
        d = load_domain(o["domain"])
        jobs = [(o["model"], d.to_json(), job_seed(o["seed"], i), o["wmax"]) for i in range(o["n"])]
        ds = common_grid(run_jobs(_lattice_driving_job, jobs, o["workers"]), n=o["grid"])
        source = {"model": o["model"]}
    ref = o["reference"]
    if ref is not None:
        try:
            ref = float(ref)
        except ValueError:
            pass
    est = estimate_kappa(ds, n_boot=o["boot"], seed=o["seed"], reference=ref)
    st = driving_tail_report(ds)
    if o["stats_csv"]:
        _write(o["stats_csv"], st.to_csv())
    out = {"schema": "kappa/1", "base_seed": o["seed"], "source": source, "estimate": est.as_dict(),
           "ci_width": est.ci_hi - est.ci_lo, "T": float(ds[0].T), "tails": st.summary()}
    _write(o["out"], _dump(out))
    _plot(o["plot"], o["out"], "driving exceedances",
          "e = d['tails']['exceedance']\nplt.semilogy([float(k) for k in e], list(e.values()), 'o-')\n"
          "plt.xlabel('L/u'); plt.ylabel('P(|W(u^2/4)| >= 2L)')")
    return 0


def cmd_continuity(o):
    from .sle import kappa_continuity_experiment, strictly_decreasing

    rows = kappa_continuity_experiment(o["kappa"], o["deltas"], T=o["T"], dt=o["dt"], n_seeds=o["n_seeds"],
                                       seed=o["seed"], workers=o["workers"])
    out = {"schema": "continuity/1", "base_seed": o["seed"], "rows": rows,
           "strictly_decreasing": strictly_decreasing(r["mean_distance"] for r in rows)}
    _write(o["out"], _dump(out))
    _plot(o["plot"], o["out"], "coupled trace distances",
          "rows = d['rows']\nplt.loglog([r['delta'] for r in rows], [r['mean_distance'] for r in rows], 'o-')\n"
          "plt.xlabel('delta'); plt.ylabel('mean distance')")
    return 0


def cmd_merge(o):
    from .conditions import CrossingReport, merge_reports

    reps = []
    for path in o["reports"]:
        if not os.path.exists(path):
            raise InvalidInput(f"{path} does not exist")
        with open(path) as fh:
            rep = CrossingReport.from_csv(fh.read())
        models = {k[0] for k in rep.cells}
        if len(models) > 1:
            raise InvalidInput(f"{path}: mixed models {sorted(models)}")
        if models:
            rep.meta["model"] = models.pop()
        reps.append(rep)
    merged = merge_reports(reps)
    merged.meta.pop("samples", None)
    merged.meta["min_trials"] = o["min_trials"]
    _write(o["out"], merged.to_csv())
    if o["out_json"]:
        _write(o["out_json"], merged.to_json() + "\n")
    return 0


COMMANDS = {
    "sample": cmd_sample, "extract-driving": cmd_extract_driving, "trace": cmd_trace,
    "check-condition": cmd_check_condition, "capacity": cmd_capacity, "six-arm": cmd_six_arm,
    "kappa": cmd_kappa, "continuity": cmd_continuity, "merge": cmd_merge,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        o = resolve(args)
        return COMMANDS[args.verb](o)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"loewner-lab {args.verb}: error: {e}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
