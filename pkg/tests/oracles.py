"""Slow, independent reference computations used as test oracles.

Nothing here imports the code paths it checks: protocol rules are
re-implemented from scratch on plain Python lists, neighborhood statistics
are recomputed by double loops, and the gamma recurrence is evaluated
from its defining sum in exact rational arithmetic.
"""
from __future__ import annotations

import itertools
from fractions import Fraction


def neighborhood_sums(client_adj, r):
    return [sum(r[u] for u in nbrs) for nbrs in client_adj]


def burned_fractions(client_adj, burned):
    return [Fraction(sum(1 for u in nbrs if burned[u]), len(nbrs)) for nbrs in client_adj]


def gamma_exact(c, ratio, t_max):
    """gamma_t = (2 ratio / c) * sum_{i=1..t} prod_{j<i} gamma_j, as Fractions."""
    k = Fraction(2) * Fraction(ratio) / Fraction(c)
    g = [Fraction(1)]
    for t in range(1, t_max + 1):
        total = Fraction(0)
        for i in range(1, t + 1):
            p = Fraction(1)
            for j in range(i):
                p *= g[j]
            total += p
        g.append(k * total)
    return g


def apply_round(kind, cd, state, draws):
    """One protocol round on plain lists. ``draws`` lists (client, server) per alive ball."""
    accepted, load, received, burned = (list(x) for x in state)
    n = len(load)
    r = [0] * n
    for _, u in draws:
        r[u] += 1
    accept = [False] * n
    for u in range(n):
        if r[u] == 0:
            continue
        if kind == "SAER":
            received[u] += r[u]
            if burned[u]:
                continue
            if received[u] > cd:
                burned[u] = True
                continue
            accept[u] = True
        else:
            received[u] += r[u]
            if load[u] + r[u] <= cd:
                accept[u] = True
    for v, u in draws:
        if accept[u]:
            accepted[v] += 1
            load[u] += 1
    return (tuple(accepted), tuple(load), tuple(received), tuple(burned))


def completion_distribution(client_adj, kind, c, d, rounds):
    """Exact P(completion round = t) for t = 1..rounds by enumerating every draw.

    Returns (dist, p_unfinished) with dist[t] a Fraction.
    """
    n = len(client_adj)
    cd = c * d
    start = ((0,) * n, (0,) * n, (0,) * n, (False,) * n)
    frontier = {start: Fraction(1)}
    dist = {}
    for t in range(1, rounds + 1):
        nxt: dict = {}
        for state, p in frontier.items():
            alive = [d - a for a in state[0]]
            choices = []
            for v in range(n):
                choices.extend([[(v, u) for u in client_adj[v]]] * alive[v])
            n_outcomes = 1
            for ch in choices:
                n_outcomes *= len(ch)
            w = p / n_outcomes
            for draws in itertools.product(*choices):
                s2 = apply_round(kind, cd, state, draws)
                nxt[s2] = nxt.get(s2, Fraction(0)) + w
        done = Fraction(0)
        frontier = {}
        for state, p in nxt.items():
            if all(a == d for a in state[0]):
                done += p
            else:
                frontier[state] = p
        dist[t] = done
    return dist, sum(frontier.values(), Fraction(0))
