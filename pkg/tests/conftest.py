import numpy as np
import pytest

from semibench.dataset import PartitionSpec, compose_labelled, split_future
from semibench.learner import LearnerConfig, warm_up
from semibench.seeding import stream
from semibench.synth import SynthSpec, generate

FAST = LearnerConfig(n_trees=15, seed=3)


@pytest.fixture(scope="session", autouse=True)
def _kernels():
    warm_up()


@pytest.fixture(scope="session")
def blobs():
    return generate(SynthSpec(600, 400, 4, 2.0, seed=11), "blobs")


@pytest.fixture(scope="session")
def separable():
    return generate(SynthSpec(300, 300, 3, 12.0, seed=5), "separable")


def draw(d, budget, scenario, min_benign, seed=0):
    """(F, Lbar, L, U) for one run."""
    spec = PartitionSpec(budget, min_benign, scenario)
    F, Lbar = split_future(d, spec, stream(seed))
    L, U, _ = compose_labelled(Lbar, spec, stream(seed + 1))
    return F, Lbar, L, U


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
