import numpy as np
import pytest

from shiftgauge.hypothesis import Hypothesis, MlpSpec

# one line per acceptance criterion, echoed after the run
CRITERIA_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


# 1-D miniatures whose neural classes coincide with an enumerable oracle class.
# Points sit at odd multiples of 0.025*SC, thresholds at even ones.
SC = 4.0
GRID_POINTS = (np.arange(-39, 40, 2) * 0.025) * SC
THRESHOLDS = np.linspace(-SC, SC, 41)
LATENT_THRESHOLDS = np.linspace(-0.05 * SC, 2.05 * SC, 43)
MINI_SPEC = MlpSpec(1, (1,), 2, 1)


def threshold_net(t: float, s: int) -> Hypothesis:
    """relu(s*(x - t)) followed by a head that says 1 iff the ramp is positive."""
    h = Hypothesis.init(MINI_SPEC, 0)
    h.layers[0].weight.data[:] = s
    h.layers[0].bias.data[:] = -s * t
    h.layers[1].weight.data[:] = [[0.0, 10.0]]
    h.layers[1].bias.data[:] = [0.01, 0.0]
    return h


def miniature(k: int):
    """Seeded (xs, ys, xt, yt) on the grid with a threshold labeler and a shift."""
    rng = np.random.default_rng(k)
    shift = rng.uniform(0.1, 0.6) * SC
    xs = np.sort(rng.choice(GRID_POINTS[GRID_POINTS < shift], 20))
    xt = np.sort(rng.choice(GRID_POINTS[GRID_POINTS > -shift], 20))
    thr = rng.choice(GRID_POINTS) + 0.025 * SC
    return rng, xs, (xs > thr).astype(int), xt, (xt > thr).astype(int)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
