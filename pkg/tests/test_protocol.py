from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oracles import apply_round, completion_distribution
from saer.graph import BipartiteGraph, generate_regular
from saer.protocol import (
    ProtocolKind,
    RequestBatch,
    RunCompleteError,
    new_run,
    phase1,
    phase2,
    run_to_completion,
    simulate,
    step,
)


def forced_batch(s, pairs):
    """Batch with chosen (client, server) destinations for the current round."""
    clients = np.array([v for v, _ in pairs], dtype=np.int64)
    servers = np.array([u for _, u in pairs], dtype=np.int64)
    slots = np.zeros_like(clients)
    return RequestBatch(clients, slots, servers, s.graph.n, s.round + 1)


def complete(n):
    return generate_regular(n, n, 0)


# --- new_run -----------------------------------------------------------------

def test_new_run_fresh_state(k22):
    s = new_run(k22, "SAER", c=1, d=1, seed=0)
    assert s.alive_total == 2 and s.round == 0
    assert not s.burned.any() and not s.accepted.any()


def test_zero_quotas_complete_immediately(k22):
    res = simulate(k22, "SAER", 1, 1, seed=0, quotas=[0, 0])
    assert res.completion_round == 0 and res.work == 0 and res.trajectory == []


def test_quota_over_d_rejected(k22):
    with pytest.raises(ValueError):
        new_run(k22, "SAER", c=1, d=1, quotas=[2, 0])


@pytest.mark.parametrize("c,d", [(0, 1), (1, 0)])
def test_bad_constants(k22, c, d):
    with pytest.raises(ValueError):
        new_run(k22, "SAER", c=c, d=d)


# --- phase 1 -----------------------------------------------------------------

def test_phase1_done_client_sends_nothing(k22):
    s = new_run(k22, "SAER", c=1, d=2, quotas=[2, 0], seed=1)
    b = phase1(s)
    assert b.total_requests == 2 and set(b.clients.tolist()) == {0}


def test_phase1_single_neighbor():
    g = BipartiteGraph.from_adjacency([[1], [0, 1]])
    s = new_run(g, "SAER", c=2, d=2, seed=9)
    b = phase1(s)
    assert b.servers[b.clients == 0].tolist() == [1, 1]


def test_phase1_round1_total():
    g = generate_regular(1000, 60, seed=7)
    s = new_run(g, "SAER", c=32, d=2, seed=0, metrics="light")
    b = phase1(s)
    assert b.total_requests == 2000
    for v, u in zip(b.clients[:200].tolist(), b.servers[:200].tolist()):
        assert u in set(g.client_neighbors(v).tolist())


def test_phase1_leaves_state_untouched():
    g = generate_regular(20, 5, 0)
    s = new_run(g, "SAER", c=2, d=2, seed=3)
    b1, b2 = phase1(s), phase1(s)
    assert np.array_equal(b1.servers, b2.servers)
    assert s.round == 0 and not s.accepted.any()


def test_phase1_substreams_independent_of_other_clients():
    g = generate_regular(30, 6, 1)
    q = np.full(30, 3)
    a = phase1(new_run(g, "SAER", c=4, d=3, quotas=q, seed=11))
    q2 = q.copy()
    q2[::2] = 0
    b = phase1(new_run(g, "SAER", c=4, d=3, quotas=q2, seed=11))
    for v in range(1, 30, 2):
        assert a.servers[a.clients == v].tolist() == b.servers[b.clients == v].tolist()


def test_phase1_uniform_over_neighborhood():
    g = BipartiteGraph.from_adjacency([[0, 2, 3, 5, 6, 7, 9]] + [[0]] * 9)
    counts = np.zeros(10, dtype=int)
    for seed in range(3000):
        s = new_run(g, "SAER", c=1, d=1, quotas=[1] + [0] * 9, seed=seed)
        counts[phase1(s).servers[0]] += 1
    obs = counts[[0, 2, 3, 5, 6, 7, 9]]
    assert stats.chisquare(obs).pvalue > 1e-4


# --- phase 2 -----------------------------------------------------------------

def test_saer_trace_burn_on_third_ball():
    # threshold c*d = 2
    s = new_run(complete(5), "SAER", c=2, d=1, seed=0)
    out = phase2(s, forced_batch(s, [(0, 0), (1, 0), (2, 1), (3, 1), (4, 1)]))
    assert out.accept.tolist()[:2] == [True, False]
    assert s.load[0] == 2 and not s.burned[0]
    assert s.burned[1] and s.load[1] == 0 and s.received[1] == 3
    assert s.accepted.tolist() == [1, 1, 0, 0, 0]

    out = phase2(s, forced_batch(s, [(2, 0), (3, 2), (4, 2)]))
    assert s.burned[0] and s.received[0] == 3 and s.load[0] == 2
    assert s.load[2] == 2 and not s.burned[2]
    assert s.accepted.tolist() == [1, 1, 0, 1, 1]
    assert s.round == 2


def test_raes_trace_saturation_is_temporary():
    s = new_run(complete(4), "RAES", c=2, d=1, seed=0)
    phase2(s, forced_batch(s, [(0, 0), (1, 1), (2, 1), (3, 1)]))
    assert s.load.tolist() == [1, 0, 0, 0]
    phase2(s, forced_batch(s, [(1, 0), (2, 0), (3, 2)]))
    assert s.load[0] == 1 and s.accepted.tolist() == [1, 0, 0, 1]
    assert not s.burned.any()
    phase2(s, forced_batch(s, [(1, 0), (2, 3)]))
    assert s.load.tolist() == [2, 0, 1, 1]
    assert s.accepted.tolist() == [1, 1, 1, 1]


@pytest.mark.parametrize("kind", ["SAER", "RAES"])
def test_idle_server_unchanged(kind):
    s = new_run(complete(3), kind, c=1, d=1, seed=0)
    phase2(s, forced_batch(s, [(0, 0), (1, 1), (2, 1)]))
    before = (s.load[2], s.received[2], s.burned[2])
    phase2(s, forced_batch(s, [(1, 0), (2, 1)]))
    assert (s.load[2], s.received[2], s.burned[2]) == before


def test_phase2_rejects_stale_batch():
    s = new_run(complete(3), "SAER", c=1, d=1, seed=0)
    b = phase1(s)
    phase2(s, b)
    with pytest.raises(ValueError):
        phase2(s, b)


@pytest.mark.parametrize("kind", ["SAER", "RAES"])
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.integers(1, 3), d=st.integers(1, 3))
def test_phase2_matches_reference(kind, seed, c, d):
    g = generate_regular(6, 3, seed % 7)
    s = new_run(g, kind, c=c, d=d, seed=seed)
    state = (tuple([0] * 6), tuple([0] * 6), tuple([0] * 6), tuple([False] * 6))
    for _ in range(4):
        if s.complete:
            break
        b = phase1(s)
        state = apply_round(kind, c * d, state, list(zip(b.clients.tolist(), b.servers.tolist())))
        phase2(s, b)
        assert s.accepted.tolist() == list(state[0])
        assert s.load.tolist() == list(state[1])
        assert s.received.tolist() == list(state[2])
        assert s.burned.tolist() == list(state[3])


# --- step / run --------------------------------------------------------------

def test_step_after_completion_raises(matching2):
    s = new_run(matching2, "SAER", c=1, d=1, seed=0)
    step(s)
    with pytest.raises(RunCompleteError):
        step(s)


def test_k22_c2_always_round1(k22):
    # any of the four draw pairs sends at most 2 balls to a server with threshold 2
    for seed in range(50):
        res = simulate(k22, "SAER", 2, 1, seed=seed)
        assert res.completion_round == 1


def test_matching_forced(matching2):
    res = simulate(matching2, "SAER", 1, 1, seed=0)
    assert res.completion_round == 1 and res.work == 4 and res.max_load == 1


def test_completed_run_load_bounded():
    g = generate_regular(50, 8, 2)
    res = simulate(g, "SAER", 3, 2, seed=5)
    assert res.completed and res.max_load <= 6


def test_nontermination_is_reported(k22):
    # a round-1 collision at c*d = 1 burns one server; both end up burned
    results = [simulate(k22, "SAER", 1, 1, seed=s, max_rounds=20) for s in range(200)]
    stuck = [r for r in results if not r.completed]
    assert stuck
    assert all(r.completion_round is None and len(r.trajectory) == 20 for r in stuck)
    assert all(r.trajectory[-1].burned_servers == 2 for r in stuck)


def _binom_ok(k, n, p):
    sd = (n * p * (1 - p)) ** 0.5
    return abs(k - n * p) <= 4.5 * sd + 1e-9


@pytest.mark.parametrize(
    "adj,kind,c,d",
    [
        ([[0, 1], [0, 1]], "SAER", 1, 1),
        ([[0, 1], [1, 2], [0, 2]], "SAER", 1, 1),
        ([[0, 1], [1, 2], [0, 2]], "RAES", 1, 1),
        ([[0, 1, 2], [0, 1, 2], [0, 1, 2]], "RAES", 1, 1),
        ([[0, 1], [1, 2], [0, 2]], "SAER", 1, 2),
    ],
)
def test_completion_distribution_matches_enumeration(adj, kind, c, d):
    rounds = 3
    dist, _ = completion_distribution(adj, kind, c, d, rounds)
    g = BipartiteGraph.from_adjacency(adj)
    trials = 4000
    counts = {t: 0 for t in range(1, rounds + 1)}
    for seed in range(trials):
        res = simulate(g, kind, c, d, seed=seed, max_rounds=rounds)
        if res.completed:
            counts[res.completion_round] += 1
    for t in range(1, rounds + 1):
        assert _binom_ok(counts[t], trials, float(dist[t])), (t, counts[t], dist[t])


def test_enumeration_k22_nontermination_half():
    dist, rest = completion_distribution([[0, 1], [0, 1]], "SAER", 1, 1, 4)
    assert dist[1] == Fraction(1, 2) and rest == Fraction(1, 2)


def test_determinism_bitwise():
    g = generate_regular(40, 6, 3)
    a = simulate(g, "SAER", 2, 2, seed=99)
    b = simulate(g, "SAER", 2, 2, seed=99)
    assert a.trajectory == b.trajectory and a.summary() == b.summary()


# --- invariants under random instances ---------------------------------------

@st.composite
def small_instances(draw):
    n = draw(st.integers(2, 12))
    adj = []
    for _ in range(n):
        nb = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n))
        adj.append(sorted(nb))
    kind = draw(st.sampled_from(["SAER", "RAES"]))
    c = draw(st.integers(1, 4))
    d = draw(st.integers(1, 3))
    quotas = draw(st.lists(st.integers(0, d), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**40))
    return BipartiteGraph.from_adjacency(adj), kind, c, d, quotas, seed


@settings(max_examples=150, deadline=None)
@given(small_instances())
def test_round_invariants(inst):
    g, kind, c, d, quotas, seed = inst
    s = new_run(g, kind, c, d, quotas=quotas, seed=seed)
    cd = c * d
    prev_alive = s.alive_total
    prev_burned = s.burned.copy()
    prev_S = 0.0
    for _ in range(15):
        if s.complete:
            break
        load_before = s.load.copy()
        rec = step(s)
        b = s.last_batch
        r = np.bincount(b.servers, minlength=g.n)
        gained = s.load - load_before
        # all-or-nothing per server batch
        assert np.all((gained == 0) | (gained == r))
        assert s.load.max() <= cd and rec.max_load <= cd
        assert s.accepted.sum() == s.load.sum()
        assert np.all(s.load <= s.received)
        assert rec.alive_after <= prev_alive and rec.alive_after == prev_alive - rec.accepted
        assert np.all(s.burned >= prev_burned)
        if kind == "RAES":
            assert not s.burned.any()
        else:
            assert np.all(s.received[s.burned] > cd)
        assert rec.messages == 2 * rec.requests_sent
        assert rec.S_t <= rec.K_t and rec.S_t >= prev_S
        assert np.all(s.tracker.S_per_client() <= s.tracker.K_per_client())
        prev_alive, prev_burned, prev_S = rec.alive_after, s.burned.copy(), rec.S_t


def test_kind_accepts_strings():
    assert ProtocolKind("RAES") is ProtocolKind.RAES
    s = new_run(complete(2), "RAES", 1, 1)
    assert s.kind is ProtocolKind.RAES


def test_light_metrics_skip_statistics():
    g = generate_regular(30, 5, 0)
    res = run_to_completion(new_run(g, "SAER", 4, 1, seed=1, metrics="light"))
    assert all(r.S_t is None and r.K_t is None and r.r_t_max is None for r in res.trajectory)
    full = simulate(g, "SAER", 4, 1, seed=1)
    assert [r.accepted for r in res.trajectory] == [r.accepted for r in full.trajectory]
