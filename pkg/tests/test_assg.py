import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeattack.assg import (AssgParams, AssgState, alpha_histogram, assg_alpha, assg_grad,
                              assg_update, freeze, unfreeze, write_histogram_csv)
from spikeattack.numerics import ContractError, make_rng
from spikeattack.surrogate import alpha_bound, vanish_degree


def _const(v, shape=(1, 1, 1)):
    return [np.full(shape, float(v))]


def test_params_validation():
    for bad in [dict(A=0.0), dict(A=1.0), dict(beta1=1.0), dict(beta2=0.0), dict(gamma=-1),
                dict(M0=0.0), dict(D0=-0.1)]:
        with pytest.raises(ContractError):
            AssgParams(**bad)


def test_constant_one_is_fixed_point():
    s = AssgState()
    for _ in range(50):
        assg_update(s, _const(1.0))
    assert s.M[0].item() == 1.0
    assert s.D[0].item() <= 1e-12


def test_one_step_hand_values():
    s = assg_update(AssgState(), _const(0.5))
    assert s.M[0].item() == 0.95
    # 1 - 0.9 rounds to 0.09999999999999998, so D lands within an ulp or two of 0.045
    assert math.isclose(s.D[0].item(), 0.045, rel_tol=1e-15)


def test_converges_to_constant():
    s = AssgState()
    for _ in range(200):
        assg_update(s, _const(0.3, (2, 3, 4)))
    assert np.abs(s.M[0] - 0.3).max() <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(0.0, 10.0), st.floats(0.05, 0.95), st.floats(0.1, 5.0))
def test_closed_form_ema(k, c, b1, m0):
    s = AssgState(AssgParams(beta1=b1, M0=m0))
    for _ in range(k):
        s.update(_const(c))
    expected = b1 ** k * m0 + (1 - b1 ** k) * c
    assert abs(s.M[0].item() - expected) <= 1e-12 * max(1.0, expected)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30))
def test_positivity_invariants(seed, steps):
    r = make_rng(seed)
    s = AssgState(AssgParams(M0=0.01))
    for _ in range(steps):
        s.update([r.standard_normal((2, 3, 4)) * r.exponential(5.0)])
    assert np.all(s.M[0] > 0) and np.all(s.D[0] >= 0)


def test_alpha_examples():
    s = AssgState(AssgParams(A=0.5, gamma=1.5))
    s.ensure([(1, 1, 1)])
    assert math.isclose(assg_alpha(s)[0].item(), 2 / math.pi, rel_tol=1e-12)
    s.D[0][...] = 0.045
    assert math.isclose(assg_alpha(s)[0].item(), 2 / (math.pi * 1.0675), rel_tol=1e-12)
    assert abs(assg_alpha(s)[0].item() - 0.59637) < 1e-5


def test_gamma_zero_is_plain_bound():
    s = AssgState(AssgParams(A=0.87, gamma=0.0))
    s.update(_const(0.7, (1, 2, 2)))
    s.D[0][...] = 3.0
    np.testing.assert_allclose(s.alpha(0), alpha_bound(s.M[0], 0.87), rtol=1e-14)


def test_grad_examples():
    s = AssgState(AssgParams(A=0.5))
    s.ensure([(1, 2, 3)])
    np.testing.assert_allclose(assg_grad(s, np.zeros((1, 2, 3))), s.alpha(0) / 2)
    one = AssgState(AssgParams(A=0.5))
    one.ensure([(1, 1, 1)])
    assert math.isclose(assg_grad(one, np.ones((1, 1, 1))).item(), 1 / (2 * math.pi),
                        rel_tol=1e-12)
    with pytest.raises(ContractError):
        assg_grad(s, np.zeros((1, 2, 4)))


def test_grad_does_not_depend_on_flag():
    s = AssgState()
    s.update(_const(0.4, (1, 2, 2)))
    u = np.linspace(-1, 1, 4).reshape(1, 2, 2)
    g1 = s.grad(0, u)
    freeze(s)
    g2 = s.grad(0, u)
    assert g1.tobytes() == g2.tobytes()


def test_freeze_contract():
    s = AssgState()
    assert not s.frozen
    s.update(_const(0.5))
    before = s.snapshot()
    freeze(s)
    with pytest.warns(RuntimeWarning):
        assg_update(s, _const(3.0))
    assert s.skipped_updates == 1
    assert np.array_equal(before[0][0], s.M[0]) and np.array_equal(before[1][0], s.D[0])
    unfreeze(s)
    s.update(_const(3.0))
    assert s.M[0].item() != before[0][0].item()


def test_nan_rejected():
    with pytest.raises(ContractError):
        AssgState().update([np.array([[[np.nan]]])])


def test_reset_restores_initial_grid():
    s = AssgState(AssgParams(M0=2.0, D0=0.5))
    s.update(_const(0.1, (1, 1, 2)))
    s.reset()
    s.ensure([(1, 1, 2)])
    np.testing.assert_array_equal(s.M[0], 2.0)
    np.testing.assert_array_equal(s.D[0], 0.5)


def test_expected_vanishing_bound():
    # state driven to near-convergence on |u| draws, then judged on fresh ones
    fresh = np.abs(make_rng(1).standard_normal(100_000) * 0.8)
    means = {}
    for gamma in (0.0, 1.5):
        r = make_rng(0)
        s = AssgState(AssgParams(A=0.87, gamma=gamma, beta1=0.99, beta2=0.99))
        for _ in range(2000):
            s.update([r.standard_normal((1, 1, 1)) * 0.8])
        means[gamma] = float(vanish_degree(s.alpha(0).item(), fresh).mean())
    assert means[0.0] <= 0.87 + 0.02
    assert means[1.5] < means[0.0]


def test_histogram_counts_conserved(tmp_path):
    r = make_rng(3)
    s = AssgState()
    shapes = [(4, 5, 6), (4, 5, 3)]
    for _ in range(3):
        s.update([r.standard_normal(sh) for sh in shapes])
    rows, summaries = alpha_histogram(s, bins=10)
    assert sum(c for *_, c in rows) == 5 * 4 * (6 + 3)
    assert len(summaries) == 2 * 4
    p = tmp_path / "h.csv"
    write_histogram_csv(s, p, bins=10)
    lines = p.read_text().splitlines()
    assert lines[0] == "layer,t,alpha_bin_lo,alpha_bin_hi,count,stat"
    stats = [ln.split(",")[-1] for ln in lines[1:]]
    assert stats.count("mean") == 8 and stats.count("p90") == 8
