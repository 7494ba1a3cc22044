"""Analytic envelopes for the cumulative neighborhood load K_t.

Stage I bounds K_t by the sequence

    gamma_0 = 1,   gamma_t = (2 q / c) * sum_{i=1..t} prod_{j<i} gamma_j

where q = Delta_max(S) / Delta_min(C) (q = 1 on regular graphs). It lasts
until the first round T with d * Delta_max(S) * prod_{j<T} gamma_j <= 12 ln n.
Stage II, for T <= t <= 3 ln n, uses the affine bound

    delta_t = 1/4 + 24 t ln n / (c d Delta_min(C)).

All logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryParams:
    n: int
    d: int
    c: int
    eta: float = 1.0
    rho: float = 1.0
    delta_min_c: int = 0
    delta_max_s: int | None = None
    alpha: float | None = None

    @classmethod
    def regular(cls, n: int, delta: int, d: int, c: int, eta: float = 1.0) -> "TheoryParams":
        return cls(n=n, d=d, c=c, eta=eta, rho=1.0, delta_min_c=delta, delta_max_s=delta)

    @property
    def dmax_s(self) -> int:
        return self.delta_min_c if self.delta_max_s is None else self.delta_max_s

    @property
    def ratio(self) -> float:
        return self.dmax_s / self.delta_min_c


@dataclass(frozen=True)
class TheoryEnvelope:
    gamma: np.ndarray
    products: np.ndarray        # products[t] = prod_{j<t} gamma_j
    delta_seq: np.ndarray       # formula value for every t in 0..completion_bound
    T: int
    T_cap: float
    completion_bound: int
    recommended_c: int
    alpha: float
    params: TheoryParams = field(repr=False)

    def bound(self, t: int) -> float:
        """Envelope value applying to round ``t``: gamma before T, delta from T on."""
        return float(self.gamma[t]) if t < self.T else float(self.delta_seq[t])

    def header(self) -> dict:
        return {
            "T": self.T,
            "T_cap": self.T_cap,
            "completion_bound": self.completion_bound,
            "recommended_c": self.recommended_c,
            "alpha": self.alpha,
            "c": self.params.c,
            "ratio": self.params.ratio,
        }

    def rows(self) -> list[dict]:
        return [
            {"t": t, "gamma_t": float(self.gamma[t]), "product_t": float(self.products[t]),
             "delta_t": float(self.delta_seq[t])}
            for t in range(self.completion_bound + 1)
        ]


def choose_alpha(c: float, ratio: float = 1.0) -> float:
    """Largest alpha (floored at 2) with 2 * ratio / c <= 1 / alpha**2 in floating point."""
    k = 2.0 * ratio / c
    if k > 0.25:
        raise EnvelopeError(f"c too small for envelope: 2*ratio/c = {k:.4g} > 1/4")
    alpha = math.sqrt(c / (2.0 * ratio))
    while k > 1.0 / alpha**2:
        alpha = math.nextafter(alpha, 0.0)
    return max(alpha, 2.0)


def gamma_sequence(c: float, ratio: float, t_max: int) -> np.ndarray:
    """``gamma_0 .. gamma_{t_max}`` via gamma_{t+1} = gamma_t + k * prod_{j<=t} gamma_j."""
    if c < 1 or ratio < 1:
        raise EnvelopeError("need c >= 1 and ratio >= 1")
    k = 2.0 * ratio / c
    if k > 0.25:
        raise EnvelopeError(f"c too small for envelope: 2*ratio/c = {k:.4g} > 1/4")
    g = np.empty(t_max + 1)
    g[0] = 1.0
    prod = 1.0
    for t in range(t_max):
        prod *= g[t]
        g[t + 1] = g[t] + k * prod if t else k
    return g


def prefix_products(gamma: np.ndarray) -> np.ndarray:
    """``out[t] = prod_{j<t} gamma_j`` (empty product 1 at t = 0)."""
    return np.concatenate(([1.0], np.cumprod(gamma[:-1])))


@dataclass(frozen=True)
class Horizon:
    T: int
    cap: float


def stage1_horizon(params: TheoryParams, gamma: np.ndarray) -> Horizon:
    """Smallest T >= 1 with d * Delta_max(S) * prod_{j<T} gamma_j <= 12 ln n.

    ``cap`` is the closed-form bound (1/2) ln(d Delta / (12 ln n)), shown for
    reference only.
    """
    target = 12.0 * math.log(params.n)
    mass = params.d * params.dmax_s
    while True:
        hits = np.flatnonzero(mass * prefix_products(gamma)[1:] <= target)
        if hits.size:
            break
        # products shrink at least geometrically, so doubling terminates
        gamma = gamma_sequence(params.c, params.ratio, 2 * gamma.size)
    return Horizon(int(hits[0]) + 1, 0.5 * math.log(mass / target))


def delta_sequence(params: TheoryParams, t_max: int) -> np.ndarray:
    t = np.arange(t_max + 1, dtype=np.float64)
    slope = 24.0 * math.log(params.n) / (params.c * params.d * params.delta_min_c)
    return 0.25 + slope * t


def recommended_c(eta: float, rho: float, d: int) -> int:
    if eta <= 0 or rho < 1 or d < 1:
        raise EnvelopeError("need eta > 0, rho >= 1, d >= 1")
    return math.ceil(max(32.0 * rho, 288.0 / (eta * d)))


def completion_bound(n: int) -> int:
    return math.floor(3 * math.log(n))


def envelope(params: TheoryParams) -> TheoryEnvelope:
    if params.n < 2 or params.d < 1 or params.delta_min_c < 1:
        raise EnvelopeError("need n >= 2, d >= 1 and a positive minimum client degree")
    ratio = params.ratio
    alpha = params.alpha if params.alpha is not None else choose_alpha(params.c, ratio)
    if alpha < 2 or 2.0 * ratio / params.c > 1.0 / alpha**2:
        raise EnvelopeError(f"alpha={alpha} violates alpha >= 2 and 2*ratio/c <= 1/alpha^2")
    bound = completion_bound(params.n)
    gamma = gamma_sequence(params.c, ratio, max(bound, 1))
    hz = stage1_horizon(params, gamma)
    if hz.T > gamma.size - 1:
        gamma = gamma_sequence(params.c, ratio, hz.T)
    return TheoryEnvelope(
        gamma=gamma,
        products=prefix_products(gamma),
        delta_seq=delta_sequence(params, max(bound, gamma.size - 1)),
        T=hz.T,
        T_cap=hz.cap,
        completion_bound=bound,
        recommended_c=recommended_c(params.eta, params.rho, params.d),
        alpha=alpha,
        params=params,
    )


@dataclass(frozen=True)
class GammaPropertyReport:
    """Per-bullet verdicts; each ``*_fail`` lists the offending t values."""
    alpha: float
    increasing_fail: list[int]
    gamma_le_inv_alpha_fail: list[int]
    product_fail: list[int]
    induction_fail: list[int]

    @property
    def passed(self) -> bool:
        return not (self.increasing_fail or self.gamma_le_inv_alpha_fail
                    or self.product_fail or self.induction_fail)


def check_gamma_properties(c: float, ratio: float, t_max: int, alpha: float | None = None) -> GammaPropertyReport:
    """Exact (no tolerance) evaluation of the gamma-sequence properties for t <= t_max.

    * strictly increasing from t = 1 on (gamma_0 = 1 is a seed value);
    * gamma_t <= 1/alpha for t >= 1;
    * prod_{j<t} gamma_j <= alpha^-t for t >= 1;
    * gamma_t <= 1/alpha - 1/alpha^(t+1) for t >= 1.
    """
    if alpha is None:
        alpha = choose_alpha(c, ratio)
    g = gamma_sequence(c, ratio, t_max)
    prods = prefix_products(g)
    inc = [t for t in range(2, t_max + 1) if not g[t] > g[t - 1]]
    le = [t for t in range(1, t_max + 1) if not g[t] <= 1.0 / alpha]
    pr = [t for t in range(1, t_max + 1) if not prods[t] <= 1.0 / alpha**t]
    ind = [t for t in range(1, t_max + 1) if not g[t] <= 1.0 / alpha - 1.0 / alpha ** (t + 1)]
    return GammaPropertyReport(alpha, inc, le, pr, ind)
