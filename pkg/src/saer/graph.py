"""Client-server bipartite graphs: construction, validation, queries and I/O.

Both sides always have the same size ``n``. Adjacency is stored twice in CSR
form (client -> servers and server -> clients), each neighbor list sorted
ascending, so two graphs with the same edge set compare equal.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

REGULAR_RETRY_BUDGET = 1000
STUB_RETRY_BUDGET = 1000


class GraphError(ValueError):
    """Invalid graph parameters or structure."""


class GenerationError(GraphError):
    """A random generator ran out of retries."""


class GraphFormatError(GraphError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    n_clients: int
    n_servers: int
    client_indptr: np.ndarray
    client_indices: np.ndarray
    server_indptr: np.ndarray = field(repr=False)
    server_indices: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n: int, clients: Iterable[int], servers: Iterable[int]) -> "BipartiteGraph":
        """Build a graph on ``n`` clients and ``n`` servers from parallel edge arrays.

        Raises :class:`GraphError` on out-of-range indices, duplicate edges or
        clients without neighbors.
        """
        v = np.asarray(list(clients) if not isinstance(clients, np.ndarray) else clients, dtype=np.int64)
        u = np.asarray(list(servers) if not isinstance(servers, np.ndarray) else servers, dtype=np.int64)
        if n < 1:
            raise GraphError("graph needs at least one client and one server")
        if v.shape != u.shape:
            raise GraphError("client and server edge arrays differ in length")
        if v.size and (v.min() < 0 or v.max() >= n or u.min() < 0 or u.max() >= n):
            raise GraphError("edge endpoint out of range")
        keys = v * n + u
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if keys.size > 1 and np.any(keys[1:] == keys[:-1]):
            raise GraphError("duplicate edge")
        v, u = keys // n, keys % n
        c_counts = np.bincount(v, minlength=n)
        if np.any(c_counts == 0):
            raise GraphError(f"client {int(np.argmin(c_counts))} has no neighbors")
        c_indptr = np.concatenate(([0], np.cumsum(c_counts))).astype(np.int64)

        skeys = np.sort(u * n + v)
        s_counts = np.bincount(skeys // n, minlength=n)
        s_indptr = np.concatenate(([0], np.cumsum(s_counts))).astype(np.int64)
        for arr in (c_indptr, u, s_indptr, skeys):
            arr.flags.writeable = False
        s_idx = skeys % n
        s_idx.flags.writeable = False
        return cls(n, n, c_indptr, u, s_indptr, s_idx)

    @classmethod
    def from_adjacency(cls, client_adj: list[list[int]]) -> "BipartiteGraph":
        n = len(client_adj)
        clients = [v for v, nbrs in enumerate(client_adj) for _ in nbrs]
        servers = [u for nbrs in client_adj for u in nbrs]
        return cls.from_edges(n, clients, servers)

    @property
    def n(self) -> int:
        return self.n_clients

    @property
    def n_edges(self) -> int:
        return int(self.client_indices.size)

    def client_neighbors(self, v: int) -> np.ndarray:
        return self.client_indices[self.client_indptr[v]:self.client_indptr[v + 1]]

    def server_neighbors(self, u: int) -> np.ndarray:
        return self.server_indices[self.server_indptr[u]:self.server_indptr[u + 1]]

    @property
    def client_adj(self) -> list[list[int]]:
        return [self.client_neighbors(v).tolist() for v in range(self.n_clients)]

    @property
    def server_adj(self) -> list[list[int]]:
        return [self.server_neighbors(u).tolist() for u in range(self.n_servers)]

    @cached_property
    def client_degrees(self) -> np.ndarray:
        return np.diff(self.client_indptr)

    @cached_property
    def server_degrees(self) -> np.ndarray:
        return np.diff(self.server_indptr)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Client-by-server 0/1 matrix; ``incidence @ x`` sums ``x`` over each N(v)."""
        data = np.ones(self.n_edges, dtype=np.int64)
        return sp.csr_matrix(
            (data, self.client_indices, self.client_indptr), shape=(self.n_clients, self.n_servers)
        )

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges as (clients, servers) arrays in canonical sorted order."""
        return np.repeat(np.arange(self.n_clients), self.client_degrees), self.client_indices

    def validate(self) -> None:
        """Full-scan check of the structural invariants; raises GraphError."""
        if self.n_clients != self.n_servers:
            raise GraphError("client and server sides must have equal size")
        if np.any(self.client_degrees < 1):
            raise GraphError("every client needs at least one server")
        for v in range(self.n_clients):
            nb = self.client_neighbors(v)
            if nb.size > 1 and np.any(np.diff(nb) <= 0):
                raise GraphError(f"client {v} adjacency not sorted/distinct")
        cv, cu = self.edges()
        fwd = np.sort(cv * self.n + cu)
        su = np.repeat(np.arange(self.n_servers), self.server_degrees)
        bwd = np.sort(self.server_indices * self.n + su)
        if not np.array_equal(fwd, bwd):
            raise GraphError("client and server adjacency disagree")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.n_clients == other.n_clients
            and np.array_equal(self.client_indptr, other.client_indptr)
            and np.array_equal(self.client_indices, other.client_indices)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class DegreeReport:
    delta_min_C: int
    delta_max_C: int
    delta_min_S: int
    delta_max_S: int
    ratio: float


def degree_report(g: BipartiteGraph) -> DegreeReport:
    cd, sd = g.client_degrees, g.server_degrees
    dmin_c = int(cd.min())
    dmax_s = int(sd.max())
    return DegreeReport(dmin_c, int(cd.max()), int(sd.min()), dmax_s, dmax_s / dmin_c)


@dataclass(frozen=True)
class CheckEntry:
    name: str
    passed: bool
    value: float
    bound: float


@dataclass(frozen=True)
class PreconditionReport:
    entries: tuple[CheckEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def check_theorem_preconditions(g: BipartiteGraph, eta: float, rho: float) -> PreconditionReport:
    """Check min client degree >= eta (ln n)^2 and max server / min client degree <= rho."""
    if eta <= 0 or rho < 1:
        raise GraphError("need eta > 0 and rho >= 1")
    rep = degree_report(g)
    need = eta * math.log(g.n) ** 2
    return PreconditionReport((
        CheckEntry("min_client_degree", rep.delta_min_C >= need, float(rep.delta_min_C), need),
        CheckEntry("degree_ratio", rep.ratio <= rho, rep.ratio, float(rho)),
    ))


# --- generators -------------------------------------------------------------

def _random_matching_avoiding(adj: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random permutation ``p`` with ``adj[v, p[v]]`` False for every v.

    Starts from a uniform permutation and repairs conflicts by random
    transpositions that keep both touched clients conflict-free.
    """
    n = adj.shape[0]
    rows = np.arange(n)
    perm = rng.permutation(n)
    for _ in range(REGULAR_RETRY_BUDGET):
        bad = np.flatnonzero(adj[rows, perm])
        if bad.size == 0:
            return perm
        partners = rng.integers(0, n, size=bad.size)
        for v, w in zip(bad.tolist(), partners.tolist()):
            pv, pw = perm[v], perm[w]
            if not adj[v, pw] and not adj[w, pv]:
                perm[v], perm[w] = pw, pv
    raise GenerationError("retry budget exhausted while building a perfect matching")


def _superposed_matchings(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    rows = np.arange(n)
    for _ in range(k):
        adj[rows, _random_matching_avoiding(adj, rng)] = True
    return adj


def generate_regular(n: int, delta: int, seed: int) -> BipartiteGraph:
    """Random ``delta``-regular bipartite graph on n + n vertices.

    Superposes ``delta`` edge-disjoint uniform random perfect matchings. Above
    ``n/2`` the complement ``(n - delta)``-regular graph is built instead,
    where the repair step has plenty of room.
    """
    if n < 1 or not 1 <= delta <= n:
        raise GraphError(f"infeasible parameters: need 1 <= delta <= n (n={n}, delta={delta})")
    rng = np.random.default_rng(seed)
    if 2 * delta > n:
        adj = ~_superposed_matchings(n, n - delta, rng)
    else:
        adj = _superposed_matchings(n, delta, rng)
    v, u = np.nonzero(adj)
    return BipartiteGraph.from_edges(n, v, u)


def _almost_regular_degrees(
    n: int, delta_min_c: int, rho: float, heavy_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    cap = math.floor(rho * delta_min_c + 1e-9)
    client_deg = np.full(n, delta_min_c, dtype=np.int64)
    n_heavy = int(round(heavy_fraction * n))
    if n_heavy and cap > delta_min_c:
        heavy = rng.choice(n, size=n_heavy, replace=False)
        client_deg[heavy] = rng.integers(delta_min_c + 1, cap + 1, size=n_heavy)
    total = int(client_deg.sum())
    base, extra = divmod(total, n)
    server_deg = np.full(n, base, dtype=np.int64)
    server_deg[rng.choice(n, size=extra, replace=False)] += 1
    if server_deg.max() > min(cap, n) or client_deg.max() > n:
        raise GraphError("infeasible degree sequence")
    return client_deg, server_deg


def _pair_stubs(client_deg: np.ndarray, server_deg: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Bipartite configuration model; parallel edges removed by random edge switches."""
    n = client_deg.size
    cv = np.repeat(np.arange(n), client_deg)
    su = rng.permutation(np.repeat(np.arange(n), server_deg))
    keys = cv * n + su
    counts: dict[int, int] = {}
    for k in keys.tolist():
        counts[k] = counts.get(k, 0) + 1
    m = keys.size
    for _ in range(STUB_RETRY_BUDGET):
        dup = [i for i in range(m) if counts[int(keys[i])] > 1]
        if not dup:
            return cv, su
        for i in dup:
            if counts[int(keys[i])] <= 1:
                continue
            j = int(rng.integers(m))
            a, b = int(cv[i]), int(cv[j])
            x, y = int(su[i]), int(su[j])
            new_i, new_j = a * n + y, b * n + x
            if a == b or new_i in counts or new_j in counts:
                continue
            for old in (int(keys[i]), int(keys[j])):
                counts[old] -= 1
                if counts[old] == 0:
                    del counts[old]
            counts[new_i] = 1
            counts[new_j] = 1
            su[i], su[j] = y, x
            keys[i], keys[j] = new_i, new_j
    raise GenerationError("retry budget exhausted while removing parallel edges")


def generate_almost_regular(
    n: int, delta_min_c: int, rho: float, heavy_fraction: float, seed: int
) -> BipartiteGraph:
    """Random bipartite graph with min client degree ``delta_min_c`` and
    max server degree at most ``rho * delta_min_c``.

    A ``heavy_fraction`` of clients gets a degree drawn uniformly from
    ``(delta_min_c, rho * delta_min_c]``; server degrees are balanced to
    within one. With ``rho == 1`` this is a ``delta_min_c``-regular graph.
    """
    if rho < 1:
        raise GraphError("rho must be >= 1")
    if not 0 <= heavy_fraction <= 0.1:
        raise GraphError("heavy_fraction must lie in [0, 0.1]")
    if n < 1 or not 1 <= delta_min_c <= n:
        raise GraphError(f"infeasible parameters: need 1 <= delta_min_c <= n (n={n}, delta_min_c={delta_min_c})")
    rng = np.random.default_rng(seed)
    client_deg, server_deg = _almost_regular_degrees(n, delta_min_c, rho, heavy_fraction, rng)
    if np.all(client_deg == delta_min_c) and np.all(server_deg == delta_min_c):
        return generate_regular(n, delta_min_c, seed)
    v, u = _pair_stubs(client_deg, server_deg, rng)
    return BipartiteGraph.from_edges(n, v, u)


# --- serialization ----------------------------------------------------------

def dump_graph(g: BipartiteGraph, f: TextIO) -> None:
    f.write(f"{g.n_clients} {g.n_servers}\n")
    v, u = g.edges()
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack((v, u)), fmt="%d")
    f.write(buf.getvalue())


def save_graph(g: BipartiteGraph, sink: str | os.PathLike | TextIO) -> None:
    if hasattr(sink, "write"):
        dump_graph(g, sink)  # type: ignore[arg-type]
        return
    with open(sink, "w") as f:
        dump_graph(g, f)


def parse_graph(lines: Iterable[str]) -> BipartiteGraph:
    header: tuple[int, int] | None = None
    seen: set[tuple[int, int]] = set()
    clients: list[int] = []
    servers: list[int] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected two integers, got {line!r}", lineno)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"non-integer field in {line!r}", lineno) from None
        if header is None:
            if a < 1 or b < 1:
                raise GraphFormatError("malformed header: sizes must be positive", lineno)
            if a != b:
                raise GraphFormatError("malformed header: client and server counts differ", lineno)
            header = (a, b)
            continue
        if not (0 <= a < header[0] and 0 <= b < header[1]):
            raise GraphFormatError(f"index out of range: {a} {b}", lineno)
        if (a, b) in seen:
            raise GraphFormatError(f"duplicate edge: {a} {b}", lineno)
        seen.add((a, b))
        clients.append(a)
        servers.append(b)
    if header is None:
        raise GraphFormatError("malformed header: file is empty")
    try:
        return BipartiteGraph.from_edges(header[0], np.array(clients, dtype=np.int64), np.array(servers, dtype=np.int64))
    except GraphFormatError:
        raise
    except GraphError as exc:
        raise GraphFormatError(str(exc)) from None


def load_graph(source: str | os.PathLike | TextIO) -> BipartiteGraph:
    if hasattr(source, "read"):
        return parse_graph(source)  # type: ignore[arg-type]
    with open(source) as f:
        return parse_graph(f)
