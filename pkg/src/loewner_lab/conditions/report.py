"""Count-additive crossing reports: cells, confidence intervals, CSV/JSON."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from ..geometry import InvalidInput

COLUMNS = ("model", "shape", "z0x", "z0y", "r", "R", "tau_rule", "trials", "hits", "ci_lo", "ci_hi",
           "conditioning")
SCHEMA = "crossing-report/1"
Z95 = 1.959963984540054


def wilson(hits: int, n: int, z: float = Z95):
    """Wilson score interval; zero-hit cells use the rule-of-three bound 3/n."""
    if n <= 0:
        return math.nan, math.nan
    if hits == 0:
        return 0.0, min(1.0, 3.0 / n)
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(round(x, 10))
    return str(x)


@dataclass
class CrossingReport:
    """Trials and hits per (model, shape, annulus, stopping rule) cell.

    Reports form a commutative monoid under `merge`, so shards computed by
    different workers add up to the single-shot run exactly.
    """
    cells: dict = field(default_factory=dict)  # key -> [trials, hits]
    meta: dict = field(default_factory=dict)

    def add(self, key: tuple, trial: bool, hit: bool) -> None:
        c = self.cells.setdefault(key, [0, 0])
        c[0] += int(trial)
        c[1] += int(hit)

    def merge(self, other: "CrossingReport") -> "CrossingReport":
        for k in ("model", "kind"):
            if k in self.meta and k in other.meta and self.meta[k] != other.meta[k]:
                raise InvalidInput(f"cannot merge reports with different {k}")
        out = CrossingReport({k: list(v) for k, v in self.cells.items()}, {**other.meta, **self.meta})
        for k, (t, h) in other.cells.items():
            c = out.cells.setdefault(k, [0, 0])
            c[0] += t
            c[1] += h
        out.meta["samples"] = self.meta.get("samples", 0) + other.meta.get("samples", 0)
        return out

    def rows(self) -> list:
        out = []
        for key in sorted(self.cells):
            t, h = self.cells[key]
            lo, hi = wilson(h, t)
            model, shape, x, y, r, R, rule, cond = key
            out.append(dict(model=model, shape=shape, z0x=x, z0y=y, r=r, R=R, tau_rule=rule, trials=t,
                            hits=h, ci_lo=lo, ci_hi=hi, conditioning=cond))
        return out

    def conclusive(self, min_trials: int | None = None) -> list:
        m = self.meta.get("min_trials", 1) if min_trials is None else min_trials
        return [row for row in self.rows() if row["trials"] >= max(1, m)]

    def verdict(self, threshold: float = 0.5, min_trials: int | None = None) -> str:
        """PASS iff every conclusive cell has its upper bound below threshold.

        No cells at all is a vacuous PASS; cells that are all below the trial
        minimum give INCONCLUSIVE.
        """
        conc = self.conclusive(min_trials)
        if any(not row["ci_hi"] < threshold for row in conc):
            return "FAIL"
        if self.cells and not conc:
            return "INCONCLUSIVE"
        return "PASS"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta: dict | None = None) -> "CrossingReport":
        rd = csv.reader(io.StringIO(text))
        head = next(rd, None)
        if head is None:
            return cls({}, dict(meta or {}))
        if tuple(head) != COLUMNS:
            raise InvalidInput(f"unexpected report columns {head}")
        rep = cls({}, dict(meta or {}))
        for line, row in enumerate(rd, start=2):
            try:
                d = dict(zip(COLUMNS, row))
                key = (d["model"], d["shape"], float(d["z0x"]), float(d["z0y"]), float(d["r"]), float(d["R"]),
                       d["tau_rule"], d["conditioning"])
                rep.add(key, False, False)
                rep.cells[key][0] += int(d["trials"])
                rep.cells[key][1] += int(d["hits"])
            except (KeyError, ValueError) as e:
                raise InvalidInput(f"report line {line}: {e}") from None
        return rep

    def summary(self, threshold: float = 0.5) -> dict:
        rows = self.rows()
        conc = self.conclusive()
        worst = max(conc, key=lambda r: r["ci_hi"], default=None)
        out = {
            "schema": SCHEMA,
            **{k: v for k, v in sorted(self.meta.items()) if not k.startswith("_")},
            "cells": len(rows),
            "conclusive_cells": len(conc),
            "inconclusive_cells": len(rows) - len(conc),
            "trials": sum(r["trials"] for r in rows),
            "hits": sum(r["hits"] for r in rows),
            "verdict": self.verdict(threshold),
            "worst_cell": None if worst is None else {k: worst[k] for k in ("z0x", "z0y", "r", "R", "tau_rule",
                                                                               "trials", "hits", "ci_hi")},
        }
        return out

    def to_json(self, threshold: float = 0.5) -> str:
        return json.dumps(self.summary(threshold), sort_keys=True, indent=1)


def merge_reports(reports) -> CrossingReport:
    """Count-additive merge; CIs are recomputed from the merged counts."""
    out = CrossingReport()
    for r in reports:
        out = out.merge(r)
    return out
