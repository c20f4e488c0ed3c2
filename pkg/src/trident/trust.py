"""Evidence-based trust scores with a proof-of-burn prior.

Trust is the expectation ``E = c_e t + (1 - c_e) f``: the ratio of positive
ratings ``t``, a certainty weight ``c_e`` that grows with the amount of
evidence, and a prior ``f`` bought by burning tokens at registration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist


@dataclass(frozen=True)
class Evidence:
    positive: int = 0
    negative: int = 0

    def __post_init__(self) -> None:
        if self.positive < 0 or self.negative < 0:
            raise ValueError("evidence counts must be >= 0")

    @property
    def n(self) -> int:
        return self.positive + self.negative

    def add(self, positive: bool) -> Evidence:
        return Evidence(self.positive + positive, self.negative + (not positive))

    def remove(self, positive: bool) -> Evidence:
        return Evidence(self.positive - positive, self.negative - (not positive))


@dataclass(frozen=True)
class TrustConfig:
    """Scoring knobs.

    ``N=None`` derives the evidence threshold from the confidence interval
    (``z``, ``c``) and the current point estimate; an integer fixes it.
    ``burn_baseline`` is the burn that buys a prior of exactly 0.5.
    """

    N: int | None = None
    w: float = 1.0
    z: float = 0.2
    c: float = 0.8
    burn_baseline: float = 1.0

    def __post_init__(self) -> None:
        if self.N is not None and self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.w > 0:
            raise ValueError("w must be > 0")
        if not 0 < self.z < 1:
            raise ValueError("z must be in (0, 1)")
        if not 0 < self.c < 1:
            raise ValueError("c must be in (0, 1)")
        if not self.burn_baseline > 0:
            raise ValueError("burn_baseline must be > 0")

    def threshold(self, t: float) -> int:
        if self.N is not None:
            return self.N
        return evidence_threshold(self.z, self.c, t)


@dataclass(frozen=True)
class TrustScore:
    t: float
    c_e: float
    f: float
    E: float


def point_estimate(ev: Evidence) -> float:
    return ev.positive / ev.n if ev.n > 0 else 0.0


def certainty(n: int, cfg: TrustConfig, N: int | None = None) -> float:
    """Weight of the evidence against the prior: 0 at ``n=0``, 1 from ``N``."""
    N = cfg.N if N is None else N
    if N is None:
        raise ValueError("certainty needs a fixed N (pass N= or set cfg.N)")
    if n <= 0:
        return 0.0
    if n >= N:
        return 1.0
    return N * n / (2 * cfg.w * (N - n) + N * n)


def expectation(t: float, c_e: float, f: float) -> float:
    for name, v in (("t", t), ("c_e", c_e), ("f", f)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    return c_e * t + (1 - c_e) * f


def pob_prior(burned: float, baseline: float) -> float:
    """Prior from burned tokens: ``1 - 1/(1 + log2(r + 1))`` with ``r = burned/baseline``.

    Reaches 0.5 at one baseline burn, then flattens: twenty baselines buy
    only about 0.81.
    """
    r = _ratio(burned, baseline)
    return 1 - 1 / (1 + math.log2(r + 1))


def pob_prior_alt(burned: float, baseline: float) -> float:
    """Exponential alternative ``1 - 2^(-r)``; saturates much faster."""
    r = _ratio(burned, baseline)
    return 1 - 0.5**r


def _ratio(burned: float, baseline: float) -> float:
    if burned < 0:
        raise ValueError("burned amount must be >= 0")
    if not baseline > 0:
        raise ValueError("baseline must be > 0")
    return burned / baseline


def evidence_threshold(z: float, c: float, t: float) -> int:
    """Evidence needed for a ``100(1-z)%`` confidence interval of length ``1-c``.

    ``kappa`` is the ``1 - z/2`` standard-normal quantile.  The closed form is
    real-valued; evidence is counted in whole ratings, so it is rounded up.
    """
    if not 0 < z < 1:
        raise ValueError("z must be in (0, 1)")
    if not 0 < c < 1:
        raise ValueError("c must be in (0, 1); c -> 1 is a zero-length interval")
    if not 0 <= t <= 1:
        raise ValueError("t must be in [0, 1]")
    u = 1 - c
    k2 = NormalDist().inv_cdf(1 - z / 2) ** 2
    b = 2 * u * u - 4 * t + 4 * t * t
    root = math.sqrt(4 * u * u * k2 * k2 * (1 - u * u) + k2 * k2 * b * b)
    N = (-k2 * b + root) / (2 * u * u)
    # guard against 7.000000000001 -> 8
    return max(1, math.ceil(N - 1e-9))


def score(ev: Evidence, burned: float, cfg: TrustConfig) -> TrustScore:
    t = point_estimate(ev)
    c_e = certainty(ev.n, cfg, cfg.threshold(t))
    f = pob_prior(burned, cfg.burn_baseline)
    return TrustScore(t, c_e, f, expectation(t, c_e, f))
