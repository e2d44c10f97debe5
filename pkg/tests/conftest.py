import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beamsweep.channel import SnrTrace, default_nlos_ensemble, synthesize_trace
from beamsweep.geometry import build_codebook

# 42 s is a common multiple of every default grid period, so sweep cycles tile
# the constant trace exactly.
CONSTANT_TRACE_SAMPLES = 6720


@pytest.fixture(scope="session")
def codebook():
    return build_codebook()


def constant_trace(n_beams=200, n_samples=CONSTANT_TRACE_SAMPLES, best_db=25.0, run_id="const"):
    values = best_db - 0.1 * np.arange(n_beams)[::-1]
    return SnrTrace(run_id=run_id, dt_ms=6.25, samples=np.tile(values, (n_samples, 1)))


@pytest.fixture(scope="session")
def const_trace():
    return constant_trace()


def step_drop_trace(n_samples=160):
    s = np.full((n_samples, 200), -math.inf)
    s[:, 0] = 20.0
    s[80:, 0] = 5.0  # t >= 500 ms
    s[:, 1] = 15.0
    return SnrTrace(run_id="step", dt_ms=6.25, samples=s)


@pytest.fixture(scope="session")
def step_trace():
    return step_drop_trace()


@pytest.fixture(scope="session")
def nlos_ensemble(codebook):
    return [synthesize_trace(s, codebook) for s in default_nlos_ensemble()]


ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
