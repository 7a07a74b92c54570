import shutil
import subprocess

import pytest
import torch

from traintime_exporter import ToyTransformer, example_input


@pytest.fixture(scope="session")
def toy_model():
    torch.manual_seed(7)
    return ToyTransformer(layers=2, d_model=64, d_ff=128)


@pytest.fixture(scope="session")
def toy_input(toy_model):
    torch.manual_seed(8)
    return example_input(toy_model, batch_size=8, seq_len=16)


def run_cli(cmd, *args):
    """Run an installed console script; returns CompletedProcess."""
    exe = shutil.which(cmd)
    assert exe is not None, f"{cmd} is not on PATH; install both packages first"
    return subprocess.run([exe, *args], capture_output=True, text=True)


# mirror the predictor package's acceptance reporting: one line per
# acceptance test at the end of the run
_acceptance: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.split("::")[-1]
    if _acceptance.get(name) != "FAIL":
        _acceptance[name] = "FAIL" if report.failed else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        terminalreporter.write_line(f"{outcome} {name}")
