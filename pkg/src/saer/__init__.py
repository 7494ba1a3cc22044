"""Simulation and analysis of the SAER / RAES threshold load-balancing protocols
on client-server bipartite graphs."""
from .graph import (
    BipartiteGraph,
    DegreeReport,
    GenerationError,
    GraphError,
    GraphFormatError,
    check_theorem_preconditions,
    degree_report,
    generate_almost_regular,
    generate_regular,
    load_graph,
    save_graph,
)
from .metrics import RoundRecord, RunResult, accumulate_work
from .protocol import ProtocolKind, new_run, phase1, phase2, run_to_completion, simulate, step
from .theory import TheoryEnvelope, TheoryParams, envelope, gamma_sequence, recommended_c

__version__ = "0.1.0"
