"""Interface samplers.  Every sampler is a pure function of (spec, seed)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Curve, InvalidInput
from ..lattice import DiscreteDomain
from ..rng import job_rng
from . import explore, lerw, square
from .explore import exact_interface_law, percolation_colors
from .lerw import loop_erase
from .square import P_SD_ISING, HeatBath, contour, ust_tree

MODELS = ("percolation", "lerw", "harmonic-explorer", "fk-ising", "ust-peano")


@dataclass
class ModelSpec:
    model: str
    domain: DiscreteDomain
    p: float | None = None
    q: float | None = None
    sweeps: int | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidInput(f"unknown model {self.model!r}; expected one of {', '.join(MODELS)}")
        if self.model == "percolation" and self.p is None:
            self.p = 0.5
        if self.model == "fk-ising":
            self.p = P_SD_ISING if self.p is None else self.p
            self.q = 2.0 if self.q is None else self.q
            self.sweeps = 200 if self.sweeps is None else self.sweeps
            if self.sweeps < 1:
                raise InvalidInput("sweeps must be >= 1")
            if self.q <= 0:
                raise InvalidInput("q must be positive")
        if self.p is not None and not 0 < self.p < 1:
            raise InvalidInput("p must lie in (0, 1)")
        want = "triangular" if self.model in ("percolation", "harmonic-explorer") else "square"
        if self.domain.kind != want:
            raise InvalidInput(f"{self.model} needs a {want}-lattice domain")
        if self.model in ("fk-ising", "ust-peano") and self.domain.meta.get("wired") != "bottom":
            raise InvalidInput(f"{self.model} needs a box with a wired bottom arc")


def sample_percolation(spec: ModelSpec) -> Curve:
    rng = job_rng(spec.seed)
    colors = percolation_colors(spec.domain, rng, spec.p)
    return explore.to_curve(explore.explore_percolation(spec.domain, colors), "percolation", spec.seed)


def sample_harmonic_explorer(spec: ModelSpec) -> Curve:
    rng = job_rng(spec.seed)
    return explore.to_curve(explore.explore_harmonic(spec.domain, rng), "harmonic-explorer", spec.seed)


def sample_lerw(spec: ModelSpec) -> Curve:
    return lerw.sample(spec.domain, job_rng(spec.seed), spec.seed, spec.extra.get("h"))


def sample_fk_ising(spec: ModelSpec) -> Curve:
    return square.sample_fk(spec.domain, job_rng(spec.seed), spec.seed, spec.p, spec.q, spec.sweeps)


def sample_ust_peano(spec: ModelSpec) -> Curve:
    return square.sample_ust(spec.domain, job_rng(spec.seed), spec.seed)


SAMPLERS = {
    "percolation": sample_percolation,
    "harmonic-explorer": sample_harmonic_explorer,
    "lerw": sample_lerw,
    "fk-ising": sample_fk_ising,
    "ust-peano": sample_ust_peano,
}


def sample(spec: ModelSpec) -> Curve:
    return SAMPLERS[spec.model](spec)


def explorer_for(spec: ModelSpec) -> explore.Explorer:
    """The finished exploration behind a percolation or HE sample."""
    rng = job_rng(spec.seed)
    if spec.model == "percolation":
        return explore.explore_percolation(spec.domain, percolation_colors(spec.domain, rng, spec.p))
    if spec.model == "harmonic-explorer":
        return explore.explore_harmonic(spec.domain, rng)
    raise InvalidInput(f"{spec.model} has no exploration state")


def resample_after(spec: ModelSpec, ex: explore.Explorer, k: int, rng):
    """Fresh continuation after k explored triangles, the first k kept.

    Only the colors the first k steps looked at are kept; everything else is
    redrawn, which is the law of the model in the slit domain.
    """
    d = spec.domain
    colors = np.full(d.n_sites, -1, dtype=np.int8)
    colors[d.arc1] = 1
    colors[d.arc2] = 0
    seen = ex.triangles()[:k].ravel()
    colors[seen] = ex.colors[seen]
    if spec.model == "percolation":
        unknown = colors < 0
        colors[unknown] = (rng.random(int(unknown.sum())) < spec.p).astype(np.int8)
        return explore.explore_percolation(d, colors).points()
    return explore.explore_harmonic(d, rng, colors).points()
