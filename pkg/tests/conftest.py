import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_house(tmp_path):
    """Writable copy of the shipped 2-appliance, 2-day house."""
    dst = tmp_path / "house"
    shutil.copytree(FIXTURES / "house2x2", dst)
    return dst


def run_cli(*args, cwd=None):
    env = dict(os.environ)
    return subprocess.run([sys.executable, "-m", "cosparse_nilm.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=cwd, env=env)


def nonneg_instance(rng, d, n, scale=1.0):
    return np.abs(rng.normal(size=(d, n))) * scale


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
