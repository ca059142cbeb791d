import warnings

import numpy as np
import pytest

from spikeattack.numerics import make_rng
from spikeattack.snn import SpikingClassifier, init_network


def make_model(seed=0, d=8, hidden=(8, 8), classes=2, kind="LIF", encoder="direct",
               n=20, gain=3.0, loss_kind="ce"):
    """Small random SNN plus inputs labelled by its own clean predictions."""
    rng = make_rng(seed)
    net = init_network(rng, d, hidden, classes, kind=kind, T=4, encoder=encoder, gain=gain)
    x = rng.uniform(0.0, 1.0, (n, d))
    model = SpikingClassifier(net, loss_kind)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        y = model.predict(x)
    return model, x, y


@pytest.fixture
def small_model():
    return make_model()


@pytest.fixture
def rng():
    return make_rng(1234)


ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
