import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_acceptance: list[tuple[str, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def moving_square(num_frames=32, size=64, side=8, step=1, y=20, x0=10):
    """Bright square on a dark background sliding right by ``step`` px per frame."""
    frames, labels = [], []
    for t in range(num_frames):
        f = np.full((size, size, 3), 0.1, np.float32)
        g = np.zeros((size, size), np.uint8)
        x = x0 + step * t
        f[y:y + side, x:x + side] = 0.9
        g[y:y + side, x:x + side] = 1
        frames.append(f)
        labels.append(g)
    return frames, labels


@pytest.fixture
def square_video():
    return moving_square()


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {name}")
