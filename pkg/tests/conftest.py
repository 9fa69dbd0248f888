import sys

import numpy as np
import pytest

from mscatter.spd import random_spd


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def spd_pair(p, seed):
    g = np.random.default_rng(seed)
    return random_spd(p, g), random_spd(p, g)


def rel_fro(A, B):
    return np.linalg.norm(A - B) / max(1.0, np.linalg.norm(B))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
