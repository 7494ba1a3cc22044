"""
One run, round by round
=======================

Drive the protocol one round at a time, then compare SAER with RAES on a
deliberately tight threshold where collisions matter.
"""

from saer import generate_regular, new_run, simulate, step

g = generate_regular(512, 64, seed=0)

# step through a run with c = 2, d = 2: servers burn after 4 requests
state = new_run(g, "SAER", c=2, d=2, seed=11)
while not state.complete and state.round < 30:
    rec = step(state)
    print(f"t={rec.round:2d} sent={rec.requests_sent:5d} accepted={rec.accepted:5d} "
          f"burned={rec.burned_servers:4d} S_t={rec.S_t:.3f} K_t={rec.K_t:.3f}")

# the same graph and seed under both rules
for kind in ("SAER", "RAES"):
    res = simulate(g, kind, c=2, d=2, seed=3, max_rounds=60)
    print(kind, res.summary())
