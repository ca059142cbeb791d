import copy

import numpy as np
import pytest

from spikeattack.attacks import AttackConfig, pgd_perturb, run_attack
from spikeattack.data import gen_data
from spikeattack.numerics import ContractError, make_rng
from spikeattack.snn import SpikingClassifier, encode, forward, init_network, loss
from spikeattack.surrogate import SurrogateSpec
from spikeattack.train import (TrainConfig, TrainingError, at_epoch, eval_accuracy, kl_div,
                               sgd_step, train, trades_loss, training_surrogate)


def _params(g):
    return {"w": np.array(g, dtype=float)}


def test_sgd_step_examples():
    p, v = _params([1.0, -2.0]), {}
    sgd_step(p, _params([0.0, 0.0]), 0.1, 0.9, v)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    p, v = _params([1.0, -2.0]), {}
    sgd_step(p, _params([0.5, 1.0]), 0.1, 0.0, v)
    np.testing.assert_allclose(p["w"], [0.95, -2.1])
    p, v = _params([0.0]), {}
    g = _params([2.0])
    sgd_step(p, g, 0.1, 0.9, v)
    sgd_step(p, g, 0.1, 0.9, v)
    np.testing.assert_allclose(p["w"], -0.1 * 2.0 * (2 + 0.9))


def test_sgd_step_non_finite():
    p = _params([1.0])
    with pytest.raises(TrainingError):
        sgd_step(p, _params([np.inf]), 0.1, 0.9, {})
    assert p["w"][0] == 1.0


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(method="mart")
    with pytest.raises(ContractError):
        TrainConfig(method="at", steps=0)
    with pytest.raises(ContractError):
        TrainConfig(trades_beta=-1.0)


def _toy(seed=0, n=200):
    x, y, xt, yt = gen_data(n, 100, 16, 2, 4.0, 0.1, seed=seed)
    net = init_network(make_rng(seed), 16, (16, 16), 2, T=4, gain=4.0)
    return net, (x, y), (xt, yt)


def test_zero_eps_at_is_clean_epoch():
    net, data, _ = _toy()
    a, b = copy.deepcopy(net), copy.deepcopy(net)
    at_epoch(a, data, TrainConfig(method="at", eps=0.0, batch_size=50), make_rng(1))
    at_epoch(b, data, TrainConfig(method="clean", batch_size=50), make_rng(1))
    for pa, pb in zip(a.parameters().values(), b.parameters().values()):
        np.testing.assert_array_equal(pa, pb)


def test_inner_attack_raises_loss():
    net, (x, y), _ = _toy(seed=3, n=2000)
    model = SpikingClassifier(net, "tet")
    sg = training_surrogate(net)
    harder = 0
    batches = 0
    for start in range(0, 2000, 100):
        xb, yb = x[start:start + 100], y[start:start + 100]
        xa = pgd_perturb(model, xb, yb, 8 / 255, 5, 4 / 255, sg)
        clean = loss("tet", forward(net, encode(xb, net))[0].logits_t, yb)[0]
        adv = loss("tet", forward(net, encode(xa, net))[0].logits_t, yb)[0]
        harder += adv >= clean
        batches += 1
    assert harder >= 0.95 * batches


def test_training_deterministic():
    outs = []
    for _ in range(2):
        net, data, _ = _toy(seed=4)
        train(net, data, TrainConfig(epochs=2, batch_size=50, seed=9))
        outs.append([p.tobytes() for p in net.parameters().values()])
    assert outs[0] == outs[1]


def test_training_surrogate_choice():
    assert training_surrogate(_toy()[0]).family == "triangle"
    psn = init_network(make_rng(0), 4, (4,), 2, kind="PSN")
    s = training_surrogate(psn)
    assert s.family == "atan" and s.alpha == 4.0


def test_trades_examples():
    net, (x, y), _ = _toy()
    xb, yb = x[:20], y[:20]
    ce_only, _, _ = trades_loss(net, xb, yb, TrainConfig(method="trades", trades_beta=0.0))
    ce = loss("ce", forward(net, encode(xb, net))[0].logits_t, yb)[0]
    assert ce_only == ce
    full, grads, xa = trades_loss(net, xb, yb, TrainConfig(method="trades"), make_rng(0))
    assert full >= ce
    assert np.all(np.abs(xa - xb) <= 8 / 255 + 1e-12)
    z = make_rng(0).standard_normal((5, 3))
    np.testing.assert_allclose(kl_div(z, z), 0.0, atol=1e-15)
    assert np.all(kl_div(z, make_rng(1).standard_normal((5, 3))) >= 0)


def test_trades_gradients_match_fd():
    net, (x, y), _ = _toy()
    xb, yb = x[:6], y[:6]
    cfg = TrainConfig(method="trades", trades_beta=2.0, steps=2)
    sg = SurrogateSpec.atan(2.0)
    # hold the crafted point fixed so the loss is a function of weights only
    _, grads, xa = trades_loss(net, xb, yb, cfg, make_rng(0), sg)

    def value(n):
        ce = loss("ce", forward(n, encode(xb, n))[0].logits_t, yb)[0]
        z_nat, z_adv = forward(n, encode(xb, n))[1], forward(n, encode(xa, n))[1]
        return ce + 2.0 * kl_div(z_nat, z_adv).mean()

    # spikes make the true function piecewise constant; compare on the readout,
    # where the loss is smooth
    R = net.readout
    h = 1e-6
    num = np.zeros_like(R)
    for idx in np.ndindex(R.shape):
        R[idx] += h
        net.bump()
        up = value(net)
        R[idx] -= 2 * h
        net.bump()
        dn = value(net)
        R[idx] += h
        net.bump()
        num[idx] = (up - dn) / (2 * h)
    np.testing.assert_allclose(grads["readout"], num, rtol=1e-5, atol=1e-8)


def test_eval_accuracy_examples():
    # uninformative balanced data: any untrained model sits at chance
    x, y, _, _ = gen_data(1000, 10, 16, 2, 0.0, 0.1, seed=0)
    for seed in range(5):
        net = init_network(make_rng(seed), 16, (16,), 2, gain=4.0)
        assert abs(eval_accuracy(net, x, y) - 0.5) <= 0.1
    dead = init_network(make_rng(0), 16, (16,), 2)
    for layer in dead.layers:
        layer.W[...] = 0.0
    dead.readout[...] = 0.0
    y_skew = np.array([1] * 7 + [0] * 3)
    assert eval_accuracy(dead, x[:10], y_skew) == 0.3   # argmax of ties is class 0
    assert np.isnan(eval_accuracy(dead, x[:0], y[:0]))


def test_memorize_ten_samples():
    r = make_rng(5)
    x = r.random((10, 8))
    y = np.array([0, 1] * 5)
    net = init_network(make_rng(1), 8, (64,), 2, gain=4.0)
    train(net, (x, y), TrainConfig(method="clean", epochs=300, batch_size=10, lr=0.05))
    assert eval_accuracy(net, x, y) == 1.0


@pytest.mark.slow
def test_at_more_robust_than_clean():
    x, y, xt, yt = gen_data(1000, 300, 32, 2, 4.0, 0.1, seed=1)
    robust = {}
    for method in ("clean", "at"):
        net = init_network(make_rng(1), 32, (32, 32), 2, gain=4.0)
        train(net, (x, y), TrainConfig(method=method, epochs=30, seed=1))
        model = SpikingClassifier(net, "tet")
        r = run_attack(model, xt, yt, AttackConfig(n_iter=20, method="pgd"),
                       SurrogateSpec.triangle())
        robust[method] = float(np.mean(model.predict(r.x_adv) == yt))
    assert robust["at"] > robust["clean"]
