import numpy as np
import pytest

from afua.dsp import WindowSample
from afua.netsim import Label
from afua.pipeline import RunConfig, run_pipeline


def toy_windows(n_per_class=12, T=30, seed=0, noise=0.05):
    """Linearly separable feature windows resembling the scaled corpus features."""
    rng = np.random.default_rng(seed)
    out = []
    for label, centre in ((Label.CHEWING, (0.05, 0.8)), (Label.NOT_CHEWING, (0.7, 0.35))):
        for k in range(n_per_class):
            frames = np.clip(np.asarray(centre) + rng.normal(0, noise, (T, 2)), 0, 1)
            out.append(WindowSample(frames=frames, label=label, t0=24.0 * len(out),
                                    frame_rate=10.0, kind="toy"))
    return out


@pytest.fixture
def toy():
    return toy_windows()


@pytest.fixture(scope="session")
def pipeline_result():
    """Default-config pipeline, trained once per test session."""
    return run_pipeline(RunConfig())


ACCEPTANCE_LINES: list = []


@pytest.fixture
def record():
    """Collect one pass/fail line per acceptance criterion for the session summary."""
    def _record(number: int, title: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
