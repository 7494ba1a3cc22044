"""Round-by-round execution of the SAER and RAES threshold protocols.

Each round has two phases. In phase 1 every client with ``k`` alive balls
sends them to ``k`` servers drawn uniformly with replacement from its
neighborhood. In phase 2 each server accepts or rejects its whole batch:

* SAER: a server whose cumulative received count (this round included)
  exceeds ``c*d`` rejects and is burned; burned servers reject forever.
* RAES: a server rejects the batch if accepting it would push its accepted
  load above ``c*d``; it stays eligible in later rounds.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng
from .graph import BipartiteGraph
from .metrics import MetricsTracker, RoundRecord, RunResult, accumulate_work


class ProtocolKind(str, enum.Enum):
    SAER = "SAER"
    RAES = "RAES"


class RunCompleteError(RuntimeError):
    pass


@dataclass
class SimState:
    graph: BipartiteGraph
    kind: ProtocolKind
    c: int
    d: int
    seed: int
    quota: np.ndarray
    accepted: np.ndarray = field(init=False)
    load: np.ndarray = field(init=False)
    received: np.ndarray = field(init=False)
    burned: np.ndarray = field(init=False)
    round: int = 0
    tracker: MetricsTracker | None = None
    last_batch: "RequestBatch | None" = None

    def __post_init__(self) -> None:
        n = self.graph.n
        self.accepted = np.zeros(n, dtype=np.int64)
        self.load = np.zeros(n, dtype=np.int64)
        self.received = np.zeros(n, dtype=np.int64)
        self.burned = np.zeros(n, dtype=bool)
        self.key = _rng.seed_key(self.seed)

    @property
    def threshold(self) -> int:
        return self.c * self.d

    @property
    def alive(self) -> np.ndarray:
        return self.quota - self.accepted

    @property
    def alive_total(self) -> int:
        return int(self.alive.sum())

    @property
    def complete(self) -> bool:
        return self.alive_total == 0

    def params(self) -> dict:
        return {"kind": self.kind.value, "c": self.c, "d": self.d, "seed": self.seed, "n": self.graph.n}


@dataclass(frozen=True)
class RequestBatch:
    """Phase-1 requests, one entry per alive ball in (client, slot) order."""
    clients: np.ndarray
    slots: np.ndarray
    servers: np.ndarray
    n_servers: int
    round: int

    @property
    def total_requests(self) -> int:
        return int(self.servers.size)

    @property
    def per_server(self) -> np.ndarray:
        return np.bincount(self.servers, minlength=self.n_servers)

    def requests_to(self, u: int) -> list[tuple[int, int]]:
        idx = np.flatnonzero(self.servers == u)
        return list(zip(self.clients[idx].tolist(), self.slots[idx].tolist()))


@dataclass(frozen=True)
class Phase2Outcome:
    received: np.ndarray       # r_t(u)
    accept: np.ndarray         # per-server: batch accepted this round
    newly_burned: np.ndarray
    accepted_balls: int


def new_run(
    g: BipartiteGraph,
    kind: ProtocolKind | str,
    c: int,
    d: int,
    quotas: Sequence[int] | np.ndarray | None = None,
    seed: int = 0,
    metrics: str = "full",
) -> SimState:
    if g.n < 1 or g.n_edges == 0:
        raise ValueError("empty graph")
    if c < 1 or d < 1:
        raise ValueError("c and d must be >= 1")
    if metrics not in ("full", "light"):
        raise ValueError("metrics must be 'full' or 'light'")
    if quotas is None:
        q = np.full(g.n, d, dtype=np.int64)
    else:
        q = np.asarray(quotas, dtype=np.int64).copy()
        if q.shape != (g.n,):
            raise ValueError("need one quota per client")
        if np.any(q < 0) or np.any(q > d):
            raise ValueError(f"quotas must lie in [0, d={d}]")
    s = SimState(g, ProtocolKind(kind), int(c), int(d), int(seed), q)
    if metrics == "full":
        s.tracker = MetricsTracker(g, s.c, s.d)
    return s


def phase1(s: SimState) -> RequestBatch:
    """Draw one uniform neighbor per alive ball; the state is not modified."""
    g = s.graph
    alive = s.alive
    clients = np.repeat(np.arange(g.n), alive)
    # slot index of each alive ball within its client, 0..k-1
    starts = np.cumsum(alive) - alive
    slots = np.arange(clients.size) - np.repeat(starts, alive)
    degs = g.client_degrees[clients]
    offs = _rng.choose_neighbors(s.key, s.round + 1, clients, slots, degs)
    servers = g.client_indices[g.client_indptr[clients] + offs]
    return RequestBatch(clients, slots, servers, g.n_servers, s.round + 1)


def phase2(s: SimState, batch: RequestBatch) -> Phase2Outcome:
    """Apply the server acceptance rule to a phase-1 batch and close the round."""
    if batch.round != s.round + 1:
        raise ValueError("batch was not drawn for the current round")
    r = batch.per_server
    cd = s.threshold
    s.received += r
    if s.kind is ProtocolKind.SAER:
        newly = ~s.burned & (s.received > cd)
        accept = ~s.burned & ~newly
        s.burned |= newly
    else:
        newly = np.zeros_like(s.burned)
        accept = s.load + r <= cd
    accept &= r > 0
    s.load[accept] += r[accept]
    ok = accept[batch.servers]
    per_client = np.bincount(batch.clients[ok], minlength=s.graph.n)
    s.accepted += per_client
    s.round += 1
    return Phase2Outcome(r, accept, newly, int(ok.sum()))


def step(s: SimState) -> RoundRecord:
    if s.complete:
        raise RunCompleteError("run already complete")
    batch = phase1(s)
    out = phase2(s, batch)
    s.last_batch = batch
    max_load = int(s.load.max(initial=0))
    if max_load > s.threshold:
        raise AssertionError(f"server load {max_load} exceeds c*d={s.threshold}")
    if s.tracker is not None:
        S_t, K_t, r_max = s.tracker.update(out.received, out.newly_burned)
    else:
        S_t = K_t = r_max = None
    return RoundRecord(
        round=s.round,
        requests_sent=batch.total_requests,
        accepted=out.accepted_balls,
        alive_after=s.alive_total,
        burned_servers=int(s.burned.sum()),
        S_t=S_t,
        K_t=K_t,
        r_t_max=r_max,
        messages=2 * batch.total_requests,
        max_load=max_load,
    )


def default_max_rounds(n: int) -> int:
    return math.ceil(10 * math.log(n)) + 10


def run_to_completion(s: SimState, max_rounds: int | None = None) -> RunResult:
    """Step until every ball is placed or ``max_rounds`` rounds have run.

    Non-termination is reported as ``completion_round=None``.
    """
    if max_rounds is None:
        max_rounds = default_max_rounds(s.graph.n)
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    trajectory: list[RoundRecord] = []
    while not s.complete and s.round < max_rounds:
        trajectory.append(step(s))
    params = s.params() | {"max_rounds": max_rounds}
    return RunResult(
        completion_round=s.round if s.complete else None,
        work=accumulate_work(trajectory),
        max_load=int(s.load.max(initial=0)),
        trajectory=trajectory,
        params=params,
    )


def simulate(
    g: BipartiteGraph,
    kind: ProtocolKind | str,
    c: int,
    d: int,
    seed: int,
    quotas: Sequence[int] | np.ndarray | None = None,
    max_rounds: int | None = None,
    metrics: str = "full",
) -> RunResult:
    return run_to_completion(new_run(g, kind, c, d, quotas, seed, metrics), max_rounds)
