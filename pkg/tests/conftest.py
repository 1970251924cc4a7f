import numpy as np
import pytest

from wordeq.dataset import EqCurve, EqExample, default_band_centers
from wordeq.synth import make_synthetic


@pytest.fixture(scope="session")
def corpus():
    return make_synthetic(0)


@pytest.fixture
def centers():
    return default_band_centers()


@pytest.fixture
def make_example(centers):
    def _make(word, consistency=0.9, gains=0.0, language="english", audio="a0"):
        g = np.full(40, gains, dtype=float) if np.isscalar(gains) else np.asarray(gains, float)
        return EqExample(word, language, audio, consistency, EqCurve(g, centers))
    return _make


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
