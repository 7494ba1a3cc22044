"""
A small work-scaling sweep
==========================

Run seeded multi-trial experiments over several n, write the CSV/JSON
outputs and evaluate the acceptance checks on one of them.
"""

import math
import tempfile

from saer.harness import ExperimentConfig, check_directory, run_experiment, write_experiment

for n in (256, 512, 1024):
    delta = math.ceil(9 * math.log(n) ** 2)
    cfg = ExperimentConfig(graph={"type": "regular", "n": n, "delta": min(delta, n), "seed": n},
                           c="auto", eta=9, trials=20, base_seed=n)
    out = run_experiment(cfg)
    s = out.summary.to_dict()
    print(n, "mean W/(nd) =", s["work_per_ball"]["mean"], "non-terminated:", s["non_termination_count"])

with tempfile.TemporaryDirectory() as tmp:
    write_experiment(out, tmp)
    for verdict in check_directory(tmp):
        print(verdict)
