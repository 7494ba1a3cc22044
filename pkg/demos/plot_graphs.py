"""
Building client-server graphs
=============================

Generate a regular and an almost-regular bipartite graph, inspect their
degree profiles and round-trip one through the edge-list format.
"""

import io
import math

import numpy as np

from saer import (
    check_theorem_preconditions,
    degree_report,
    generate_almost_regular,
    generate_regular,
    load_graph,
    save_graph,
)

# a Delta-regular graph with Delta = ceil(eta (ln n)^2)
n, eta = 1024, 9
delta = math.ceil(eta * math.log(n) ** 2)
g = generate_regular(n, delta, seed=1)
print(degree_report(g))

# the degree conditions the analysis needs
for entry in check_theorem_preconditions(g, eta=eta, rho=1).entries:
    print(entry)

# an almost-regular graph: 5% of clients get up to twice the base degree
h = generate_almost_regular(1024, math.ceil(math.log(1024) ** 2), rho=2.0, heavy_fraction=0.05, seed=2)
print(degree_report(h))
print("client degree histogram:", np.bincount(h.client_degrees).nonzero()[0][[0, -1]])

# edge-list round trip
buf = io.StringIO()
save_graph(h, buf)
buf.seek(0)
assert load_graph(buf) == h
print("edge list lines:", buf.getvalue().count("\n"))
