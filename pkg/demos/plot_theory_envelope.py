"""
Envelopes for the neighborhood load
===================================

Compute the gamma/delta envelope for a desk-scale configuration and
check that a simulated trajectory stays under it.
"""

import math

from saer import TheoryParams, envelope, generate_regular, recommended_c, simulate
from saer.theory import check_gamma_properties

n, eta, d = 4096, 9, 1
delta = math.ceil(eta * math.log(n) ** 2)
c = recommended_c(eta, 1, d)
env = envelope(TheoryParams.regular(n, delta, d, c, eta=eta))
print(env.header())
for row in env.rows()[:5]:
    print(row)

g = generate_regular(n, delta, seed=5)
res = simulate(g, "SAER", c, d, seed=0)
for rec in res.trajectory:
    print(f"t={rec.round} K_t={rec.K_t:.4f} bound={env.bound(rec.round):.4f}")

# exact checks on the gamma sequence; see the README for the two known exceptions
print(check_gamma_properties(c, 1.0, 30))
