import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for `import helpers`

from traintime.graph import load_graph
from traintime.latency import load_db
from traintime.partition import load_config

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def transformer_graph():
    return load_graph(os.path.join(FIXTURES, "transformer_32l.json"))


@pytest.fixture(scope="session")
def sim_db():
    return load_db([os.path.join(FIXTURES, "latency_h100sim.jsonl")])


@pytest.fixture(scope="session")
def single_op_graph():
    return load_graph(os.path.join(FIXTURES, "single_op.json"))


@pytest.fixture(scope="session")
def single_op_db():
    return load_db([os.path.join(FIXTURES, "single_op_db.jsonl")])


@pytest.fixture(scope="session")
def config_111():
    return load_config(os.path.join(FIXTURES, "config_111.json"))


# one PASS/FAIL line per acceptance test at the end of the run
_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and (report.when == "call" or report.failed):
        name = report.nodeid.split("::")[-1]
        outcome = _acceptance.get(name)
        if outcome != "failed":
            _acceptance[name] = "failed" if report.failed else report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag} {name}")
