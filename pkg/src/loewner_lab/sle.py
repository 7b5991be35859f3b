"""SLE driving functions, coupled-noise experiments and driving statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ellipj, ellipk

from .geometry import Curve, InvalidInput, curve_distance, diameter, resample
from .jobs import run_jobs
from .lattice import DiscreteDomain
from .loewner import DrivingFunction, extract_driving, solve_trace
from .rng import job_rng, job_seed

# literature values, not derived here; used only as labelled comparisons
REFERENCE_KAPPA = {"lerw": 2.0, "harmonic-explorer": 4.0, "fk-ising": 16 / 3, "percolation": 6.0,
                   "ust-peano": 8.0}


@dataclass
class SleSpec:
    kappa: float
    T: float = 1.0
    dt: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise InvalidInput("kappa must be >= 0")
        if not (self.T > 0 and self.dt > 0):
            raise InvalidInput("T and dt must be positive")

    @property
    def traceable(self) -> bool:
        """Trace experiments are meant for kappa in [0, 8)."""
        return self.kappa < 8


def brownian(T: float, dt: float, seed: int):
    """Standard Brownian motion on t = 0, dt, 2dt, ... <= T from the seed's stream."""
    n = int(math.floor(T / dt + 1e-9))
    if n < 1:
        raise InvalidInput("T must be at least dt")
    z = job_rng(seed).standard_normal(n)
    t = np.arange(n + 1) * dt
    return t, np.concatenate([[0.0], np.cumsum(z) * math.sqrt(dt)])


def sample_sle_driving(spec: SleSpec) -> DrivingFunction:
    """W = sqrt(kappa) B; one seed gives the same B for every kappa."""
    t, B = brownian(spec.T, spec.dt, spec.seed)
    w = math.sqrt(spec.kappa) * B + 0.0  # + 0.0 turns -0.0 into 0.0
    return DrivingFunction(t, w, {"kappa": spec.kappa, "seed": spec.seed})


def sle_trace(spec: SleSpec, horizon: float = 1.0) -> Curve:
    w = sample_sle_driving(spec)
    if horizon < 1:
        w = w.restrict(horizon * spec.T)
    c = solve_trace(w)
    c.meta.update(kappa=spec.kappa, seed=spec.seed)
    return c


# ---------------------------------------------------------------- kappa continuity


def _continuity_job(job):
    kappa, delta, T, dt, seed, refine = job
    a = sle_trace(SleSpec(kappa, T, dt, seed), horizon=0.9)
    if delta == 0:
        return 0.0, diameter(a.points)
    b = sle_trace(SleSpec(kappa + delta, T, dt, seed), horizon=0.9)
    return curve_distance(a, b, refine), diameter(a.points)


def kappa_continuity_experiment(kappa: float, deltas, T: float = 1.0, dt: float = 1e-3, n_seeds: int = 20,
                                seed: int = 0, refine: float | None = None, workers: int | None = None) -> list:
    """Mean coupled-noise trace distance d(gamma[kappa], gamma[kappa + delta]) per delta.

    Both traces are cut at capacity 0.9 T and run i of every delta uses the
    Brownian sample of job_seed(seed, i).  Rows carry the mean distance, its
    standard error and the mean trace diameter.
    """
    for d in deltas:
        if not (0 <= kappa < 8 and 0 <= kappa + d < 8):
            raise InvalidInput("kappa and kappa + delta must lie in [0, 8)")
    refine = math.sqrt(dt) / 2 if refine is None else refine
    seeds = [job_seed(seed, i) for i in range(n_seeds)]
    jobs = [(kappa, float(d), T, dt, s, refine) for d in deltas for s in seeds]
    res = run_jobs(_continuity_job, jobs, workers)
    rows = []
    for k, d in enumerate(deltas):
        part = np.array(res[k * n_seeds:(k + 1) * n_seeds])
        dist, diam = part[:, 0], part[:, 1]
        se = float(dist.std(ddof=1) / math.sqrt(n_seeds)) if n_seeds > 1 else math.nan
        rows.append({"kappa": kappa, "delta": float(d), "mean_distance": float(dist.mean()), "se": se,
                     "mean_diameter": float(diam.mean()), "ratio": float(dist.mean() / diam.mean()),
                     "n_seeds": n_seeds})
    return rows


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:]))


# ---------------------------------------------------------------- kappa estimation


def _matrix(drivings):
    drivings = list(drivings)
    if not drivings:
        raise InvalidInput("empty ensemble")
    t = drivings[0].times
    for w in drivings[1:]:
        if len(w.times) != len(t) or not np.array_equal(w.times, t):
            raise InvalidInput("drivings are not on a common time grid; resample with common_grid")
    return t, np.stack([w.values for w in drivings])


def common_grid(drivings, n: int = 200, T: float | None = None) -> list:
    """Piecewise-linear resampling onto n + 1 equal steps of [0, T].

    T defaults to the shortest horizon in the ensemble.
    """
    drivings = list(drivings)
    T = min(w.T for w in drivings) if T is None else T
    if T <= 0 or any(w.T < T * (1 - 1e-12) for w in drivings):
        raise InvalidInput("T exceeds the horizon of some driving")
    t = np.linspace(0.0, T, n + 1)
    return [DrivingFunction(t, w(t), dict(w.meta)) for w in drivings]


def _slope(t, V):
    m = t > 0
    return float(np.dot(t[m], V[m]) / np.dot(t[m], t[m]))


def _lag1(W, t):
    dW = np.diff(W, axis=1) / np.sqrt(np.diff(t))[None, :]
    x, y = dW[:, :-1].ravel(), dW[:, 1:].ravel()
    if len(x) < 2 or x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


@dataclass
class KappaEstimate:
    kappa: float
    ci_lo: float
    ci_hi: float
    ac1: float
    n: int
    reference: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "ci": [self.ci_lo, self.ci_hi], "ac1": self.ac1, "n": self.n,
                "reference": self.reference}


def estimate_kappa(drivings, n_boot: int = 500, seed: int = 0, reference: str | float | None = None,
                   level: float = 0.95) -> KappaEstimate:
    """Slope through the origin of Var[W_t] against t, with a bootstrap CI.

    Needs at least 30 drivings on one time grid.  `reference` names a model
    in REFERENCE_KAPPA or gives a value to compare with; it is reported, not
    used.
    """
    t, W = _matrix(drivings)
    N = len(W)
    if N < 30:
        raise InvalidInput("need at least 30 drivings")
    V = W.var(axis=0, ddof=1)
    k = _slope(t, V)
    # bootstrap over ensemble members through multinomial counts
    rng = job_rng(seed, 0)
    counts = rng.multinomial(N, np.full(N, 1.0 / N), size=n_boot).astype(float)
    m1 = counts @ W / N
    m2 = counts @ (W * W) / N
    Vb = (m2 - m1 * m1) * N / (N - 1)
    sl = (Vb[:, t > 0] @ t[t > 0]) / np.dot(t[t > 0], t[t > 0])
    lo, hi = np.quantile(sl, [(1 - level) / 2, (1 + level) / 2])
    ref = {}
    if reference is not None:
        val = REFERENCE_KAPPA.get(reference) if isinstance(reference, str) else float(reference)
        if val is None:
            raise InvalidInput(f"no reference kappa for {reference!r}")
        ref = {"name": str(reference), "value": float(val), "source": "literature (external)",
               "inside_ci": bool(lo <= val <= hi)}
    return KappaEstimate(k, float(lo), float(hi), _lag1(W, t), N, ref)


# ---------------------------------------------------------------- tails and Hoelder table


@dataclass
class DrivingStats:
    times: np.ndarray
    var: np.ndarray
    ac1: np.ndarray  # per-time lag-1 correlation of normalised increments
    ratios: np.ndarray  # L / u grid
    exceedance: np.ndarray  # P(|W(u^2/4)| >= 2L)
    decay_c: float
    decay_K: float
    decay_residual: float
    holder: dict
    exp_moment: dict
    n: int

    def to_csv(self) -> str:
        lines = ["t,var,ac1"]
        lines += [f"{float(t)!r},{float(v)!r},{float(a)!r}" for t, v, a in zip(self.times, self.var, self.ac1)]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        f = lambda x: None if not math.isfinite(x) else float(x)
        return {"n": self.n, "exceedance": {repr(float(q)): float(p) for q, p in zip(self.ratios, self.exceedance)},
                "decay": {"c": f(self.decay_c), "K": f(self.decay_K), "max_residual": f(self.decay_residual)},
                "holder": {repr(a): v for a, v in self.holder.items()},
                "exp_moment": {repr(t): v for t, v in self.exp_moment.items()}}


def holder_levels(t, w, alpha: float, T: float | None = None):
    """Dyadic increments max_j sup_{u in I_j} |W_u - W(t_j)| over levels n = 1, 2, ...

    I_j = [t_j, t_j + T 2^-n]; levels stop once the interval is shorter than
    two grid steps.  Returns (levels, M_n, bound T^alpha 2^(-alpha n)).
    """
    T = t[-1] if T is None else T
    step = float(np.max(np.diff(t)))
    out_n, out_m = [], []
    n = 1
    while T * 2.0 ** -n >= 2 * step:
        L = T * 2.0 ** -n
        j = np.minimum((t / L + 1e-9).astype(int), 2 ** n - 1)
        anchor = np.interp(j * L, t, w)
        out_n.append(n)
        out_m.append(float(np.max(np.abs(w - anchor))))
        n += 1
    levels = np.array(out_n)
    return levels, np.array(out_m), (T * 2.0 ** -levels) ** alpha


def driving_tail_report(drivings, ratios=None, alphas=(0.3, 0.4, 0.45), eps: float = 0.5,
                        times=None) -> DrivingStats:
    """Exceedances P(|W(u^2/4)| >= 2L) against L/u, exponential fit, Hoelder table.

    u runs over 2 sqrt(t) for t in `times` (default T/8, T/4, T/2, T).  The
    decay fit is log p = log K - c L/u over the nonzero cells; its largest
    residual is reported.
    """
    t, W = _matrix(drivings)
    N = len(W)
    T = t[-1]
    ratios = np.linspace(0.25, 2.0, 8) if ratios is None else np.asarray(ratios, dtype=float)
    times = [T / 8, T / 4, T / 2, T] if times is None else list(times)
    u = 2 * np.sqrt(np.asarray(times))
    Wu = np.stack([np.array([np.interp(tt, t, w) for tt in times]) for w in W])  # (N, len(times))
    exc = np.array([np.mean(np.abs(Wu) >= 2 * q * u[None, :]) for q in ratios])
    nz = exc > 0
    if nz.sum() >= 2:
        A = np.column_stack([np.ones(nz.sum()), -ratios[nz]])
        coef, *_ = np.linalg.lstsq(A, np.log(exc[nz]), rcond=None)
        K, c = float(math.exp(coef[0])), float(coef[1])
        resid = float(np.max(np.abs(np.log(exc[nz]) - A @ coef)))
    else:
        K, c, resid = math.nan, math.inf, math.nan
    var = W.var(axis=0, ddof=1) if N > 1 else np.zeros(len(t))
    ac = np.zeros(len(t))
    if len(t) > 2 and N > 2:
        dW = np.diff(W, axis=1) / np.sqrt(np.diff(t))[None, :]
        for k in range(1, dW.shape[1]):
            x, y = dW[:, k - 1], dW[:, k]
            if x.std() > 0 and y.std() > 0:
                ac[k + 1] = float(np.corrcoef(x, y)[0, 1])
    holder = {}
    for a in alphas:
        H, ok = [], []
        for w in W:
            _, M, bound = holder_levels(t, w, a, T)
            H.append(float(np.max(M / bound)) if len(M) else 0.0)
            ok.append(bool(np.all(M <= bound)))
        H = np.array(H)
        holder[float(a)] = {"median": float(np.median(H)), "q95": float(np.quantile(H, 0.95)),
                            "frac_bounded": float(np.mean(ok))}
    em = {}
    for tt in times:
        if tt > 0:
            x = np.array([np.interp(tt, t, w) for w in W])
            em[float(tt)] = float(np.mean(np.exp(eps * np.abs(x) / math.sqrt(tt))))
    return DrivingStats(t, var, ac, ratios, exc, c, K, resid, holder, em, N)


# ---------------------------------------------------------------- lattice interfaces


def _sn(z, m):
    u, v = z.real, z.imag
    s, c, d, _ = ellipj(u, m)
    s1, c1, d1, _ = ellipj(v, 1 - m)
    den = c1 ** 2 + m * s ** 2 * s1 ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return (s * d1 + 1j * c * d * s1 * c1) / den


def half_plane_map(d: DiscreteDomain):
    """Conformal map of a square-lattice box region onto H with a -> 0, b -> infinity.

    The rectangle is sent onto H by the Jacobi sn function (centre of the
    bottom side to 0, of the top side to infinity), then a real Moebius map
    moves the images of a and b.
    """
    if d.kind != "square":
        raise InvalidInput("a half-plane map is available for square-lattice boxes only")
    x0, y0, x1, y1 = d.meta["region"]
    w, h = x1 - x0, y1 - y0
    ratio = h / (w / 2)  # K'(m) / K(m)
    m = brentq(lambda m: ellipk(1 - m) / ellipk(m) - ratio, 1e-300, 1 - 1e-16)
    K = ellipk(m)
    s = 2 * K / w
    cx = (x0 + x1) / 2

    def raw(z):
        z = np.asarray(z, dtype=complex)
        return _sn((z.real - cx) * s + 1j * (z.imag - y0) * s, m)

    alpha = float(raw(d.a).real)
    top = abs(d.b.imag - y1) < 1e-12 and abs(d.b.real - cx) < 1e-12
    beta = math.inf if top else float(raw(d.b).real)

    def f(z):
        u = raw(z)
        if math.isinf(beta):
            out = u - alpha
        else:
            out = math.copysign(1.0, beta - alpha) * (u - alpha) / (beta - u)
        return out

    return f


def lattice_driving(curve, d: DiscreteDomain, wmax: float = 20.0, spacing: float = 0.25) -> DrivingFunction:
    """Driving function of a lattice interface from a to b in a box.

    The polyline is refined to `spacing`, mapped to H and cut before its
    image first leaves |w| <= wmax (b sits at infinity).
    """
    pts = curve.points if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    pts = resample(pts, spacing)
    z = half_plane_map(d)(pts[:, 0] + 1j * pts[:, 1])
    z[0] = complex(z[0].real, 0.0)
    far = np.nonzero(~(np.abs(z) <= wmax))[0]
    if len(far):
        z = z[: far[0]]
    # boundary touches after the start cannot be zipped; stop before them
    low = np.nonzero(~(z[1:].imag > 1e-12))[0]
    if len(low):
        z = z[: low[0] + 1]
    if len(z) < 2:
        raise InvalidInput("curve leaves the mapped window at once")
    df = extract_driving(z)
    df.meta.update(curve.meta if isinstance(curve, Curve) else {})
    return df
