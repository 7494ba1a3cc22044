import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from saer.graph import BipartiteGraph, generate_regular  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def k22():
    return BipartiteGraph.from_adjacency([[0, 1], [0, 1]])


@pytest.fixture
def matching2():
    return generate_regular(2, 1, seed=0)
