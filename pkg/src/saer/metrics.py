"""Per-round observables and run-level summaries.

Notation follows the load-balancing analysis: ``r_t(u)`` is the number of
requests server ``u`` receives in round ``t``; ``r_t(N(v))`` sums that over a
client's neighborhood; ``S_t(v)`` is the burned fraction of ``N(v)`` and
``K_t(v)`` the cumulative neighborhood request mass normalized by
``c * d * deg(v)``, an upper bound on ``S_t(v)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import BipartiteGraph

ROUND_COLUMNS = (
    "round", "requests_sent", "accepted", "alive_after", "burned_servers",
    "S_t", "K_t", "r_t_max", "messages", "max_load",
)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    requests_sent: int
    accepted: int
    alive_after: int
    burned_servers: int
    S_t: float | None
    K_t: float | None
    r_t_max: int | None
    messages: int
    max_load: int

    @property
    def alive_before(self) -> int:
        return self.alive_after + self.accepted

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    completion_round: int | None
    work: int
    max_load: int
    trajectory: list[RoundRecord]
    params: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.completion_round is not None

    @property
    def max_S(self) -> float | None:
        # None when S_t was not tracked (light metrics)
        vals = [r.S_t for r in self.trajectory if r.S_t is not None]
        if vals:
            return max(vals)
        return None if self.trajectory else 0.0

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "completion_round": self.completion_round if self.completed else -1,
            "work": self.work,
            "max_load": self.max_load,
            "rounds_executed": len(self.trajectory),
            "max_S_t": self.max_S,
            "params": dict(self.params),
        }


def neighborhood_request_sums(g: BipartiteGraph, per_server_r: np.ndarray) -> tuple[np.ndarray, int]:
    """Per-client ``r_t(N(v))`` and their maximum ``r_t``."""
    r = np.asarray(per_server_r, dtype=np.int64)
    if r.shape != (g.n_servers,):
        raise ValueError("need one request count per server")
    sums = g.incidence @ r
    return sums, int(sums.max(initial=0))


def burned_fraction(g: BipartiteGraph, burned: np.ndarray) -> tuple[np.ndarray, float]:
    counts = g.incidence @ np.asarray(burned, dtype=np.int64)
    frac = counts / g.client_degrees
    return frac, float(frac.max(initial=0.0))


def k_statistic(g: BipartiteGraph, c: int, d: int, cumulative_sums: np.ndarray) -> tuple[np.ndarray, float]:
    """``K_t(v) = cumulative r(N(v)) / (c d deg(v))``; regular graphs are the deg(v) = Delta case."""
    k = np.asarray(cumulative_sums, dtype=np.float64) / (c * d * g.client_degrees)
    return k, float(k.max(initial=0.0))


def accumulate_work(trajectory: Iterable[RoundRecord]) -> int:
    """Total messages: one request plus one reply per submitted ball."""
    return sum(2 * rec.requests_sent for rec in trajectory)


class MetricsTracker:
    """Incremental neighborhood statistics for one run.

    Cumulative neighborhood sums grow by ``incidence @ r_t`` each round;
    burned-neighbor counts are bumped only for servers that burn this round.
    """

    def __init__(self, g: BipartiteGraph, c: int, d: int):
        self.g = g
        self.c = c
        self.d = d
        self.cum_neigh = np.zeros(g.n_clients, dtype=np.int64)
        self.burned_neigh = np.zeros(g.n_clients, dtype=np.int64)
        self.last_neigh = np.zeros(g.n_clients, dtype=np.int64)

    def update(self, r: np.ndarray, newly_burned: np.ndarray) -> tuple[float, float, int]:
        self.last_neigh, r_max = neighborhood_request_sums(self.g, r)
        self.cum_neigh += self.last_neigh
        for u in np.flatnonzero(newly_burned):
            self.burned_neigh[self.g.server_neighbors(u)] += 1
        s = self.burned_neigh / self.g.client_degrees
        _, k_max = k_statistic(self.g, self.c, self.d, self.cum_neigh)
        return float(s.max(initial=0.0)), k_max, r_max

    def S_per_client(self) -> np.ndarray:
        return self.burned_neigh / self.g.client_degrees

    def K_per_client(self) -> np.ndarray:
        return k_statistic(self.g, self.c, self.d, self.cum_neigh)[0]


def records_max(trajectory: Sequence[RoundRecord], attr: str) -> float | None:
    vals = [getattr(r, attr) for r in trajectory if getattr(r, attr) is not None]
    return max(vals) if vals else None
