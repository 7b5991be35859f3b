"""Constant conversion between the crossing conditions, and power-law fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import InvalidInput

DIRECTIONS = ("G2->G3", "G2->C2", "C3->G2", "G3->G2")


def convert_constants(direction: str, **inputs) -> dict:
    """Explicit constants carried from one form of the crossing bound to another.

    G2->G3: K = 2, Delta = log 2 / log C.   G2->C2: M = 4 (C + 1)^2.
    C3->G2: C = (2 K e^2)^(2 pi / eps).     G3->G2: C = (2 K)^(1 / Delta).
    """
    d = direction.replace("→", "->").upper()
    if d == "G2->G3":
        C = _need(inputs, "C")
        if C <= 1:
            raise InvalidInput("C must exceed 1")
        return {"K": 2.0, "Delta": math.log(2) / math.log(C)}
    if d == "G2->C2":
        C = _need(inputs, "C")
        if C <= 1:
            raise InvalidInput("C must exceed 1")
        return {"M": 4 * (C + 1) ** 2}
    if d == "C3->G2":
        K, eps = _need(inputs, "K"), _need(inputs, "eps")
        if K <= 0 or eps <= 0:
            raise InvalidInput("need K > 0 and eps > 0")
        return {"C": (2 * K * math.e ** 2) ** (2 * math.pi / eps)}
    if d == "G3->G2":
        K, delta = _need(inputs, "K"), _need(inputs, "Delta")
        if K <= 0 or delta <= 0:
            raise InvalidInput("need K > 0 and Delta > 0")
        return {"C": (2 * K) ** (1 / delta)}
    raise InvalidInput(f"unknown direction {direction!r}; expected one of {', '.join(DIRECTIONS)}")


def _need(inputs, name):
    if name not in inputs:
        raise InvalidInput(f"missing input {name}")
    return float(inputs[name])


@dataclass
class PowerLawFit:
    K: float
    Delta: float
    Delta_lo: float
    Delta_hi: float
    residuals: np.ndarray
    clipped: np.ndarray  # rows whose zero count was replaced by 3/n

    def as_dict(self) -> dict:
        f = lambda x: None if not math.isfinite(x) else float(x)
        return {"K": f(self.K), "Delta": f(self.Delta) if math.isfinite(self.Delta) else "inf",
                "Delta_ci": [f(self.Delta_lo), f(self.Delta_hi)], "residuals": [float(r) for r in self.residuals]}


def _rows(rows):
    ratio, p, n = [], [], []
    for row in rows:
        if len(row) == 2:
            ratio.append(float(row[0]))
            p.append(float(row[1]))
            n.append(math.nan)
        else:
            q, hits, trials = row
            if trials <= 0:
                continue
            ratio.append(float(q))
            p.append(hits / trials)
            n.append(float(trials))
    return np.array(ratio), np.array(p), np.array(n)


def fit_power_law(rows, z: float = 1.959963984540054) -> PowerLawFit:
    """Fit p = K (r/R)^Delta by least squares in log-log coordinates.

    Rows are (ratio, p) or (ratio, hits, trials).  With counts, zero cells
    are clipped to the rule-of-three value 3/n and rows are weighted by the
    delta-method inverse variance n p / (1 - p) of log p.  The interval on
    Delta comes from the binomial variances when counts are known and from
    the residuals otherwise.
    """
    q, p, n = _rows(rows)
    if len(np.unique(q)) < 3:
        raise InvalidInput("need at least three distinct ratios with trials")
    counted = np.isfinite(n)
    if np.all(p == 0):
        K = float(np.max(np.where(counted, 3.0 / n, 0.0))) if counted.any() else 0.0
        return PowerLawFit(K, math.inf, math.inf, math.inf, np.zeros(len(q)), np.ones(len(q), bool))
    clipped = counted & (p == 0)
    p = np.where(clipped, np.minimum(1.0, 3.0 / np.where(counted, n, 1)), p)
    if np.any(p <= 0):
        raise InvalidInput("probabilities must be positive without counts")
    x, y = np.log(q), np.log(p)
    if counted.all():
        pc = np.clip(p, 1e-12, 1 - 1e-9)
        w = n * pc / (1 - pc)
    else:
        w = np.ones(len(q))
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * y))
    res = y - X @ beta
    if counted.all():
        cov = np.linalg.inv(A)
    else:
        dof = max(1, len(q) - 2)
        cov = np.linalg.inv(A) * float(w @ res ** 2) / dof
    se = math.sqrt(max(cov[1, 1], 0.0))
    D = float(beta[1])
    return PowerLawFit(float(math.exp(beta[0])), D, D - z * se, D + z * se, res, clipped)
