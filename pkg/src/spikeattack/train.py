"""Desk-scale robust training: clean, PGD adversarial training and TRADES."""

import math
from dataclasses import dataclass

import numpy as np

from .attacks import pgd_perturb, project_box_linf
from .numerics import ContractError, make_rng
from .snn import PsnConfig, SpikingClassifier, backward_input, encode, forward, loss
from .surrogate import SurrogateSpec


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 100
    method: str = "at"          # clean | at | trades
    eps: float = 8 / 255
    steps: int = 5
    step_size: float = 4 / 255
    loss_kind: str = "tet"
    trades_beta: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("clean", "at", "trades"):
            raise ContractError(f"unknown training method {self.method!r}")
        if self.method != "clean" and self.steps < 1:
            raise ContractError("adversarial training needs at least one inner step")
        if self.trades_beta < 0:
            raise ContractError("trades_beta must be non-negative")


def training_surrogate(net):
    """Triangle for reset neurons; atan(4) when the net contains PSN layers."""
    if any(isinstance(l.neuron, PsnConfig) for l in net.layers):
        return SurrogateSpec.atan(4.0)
    return SurrogateSpec.triangle()


def sgd_step(params, grads, lr, momentum, velocity):
    """Heavy-ball SGD, in place: ``v <- mu v + g``; ``p <- p - lr v``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}")
    for name, g in grads.items():
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(g)
        v *= momentum
        v += g
        params[name] -= lr * v
    return params, velocity


def _param_grads(net, x, y, kind, sg, rng):
    trace, _ = forward(net, encode(x, net, rng))
    value, dl = loss(kind, trace.logits_t, y)
    _, grads = backward_input(net, trace, dl, sg, param_grads=True)
    return value, grads


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def kl_div(z_nat, z_adv):
    """Per-sample ``KL(softmax z_nat || softmax z_adv)``."""
    lp, lq = _log_softmax(z_nat), _log_softmax(z_adv)
    return (np.exp(lp) * (lp - lq)).sum(axis=1)


def trades_loss(net, x, y, cfg, rng=None, sg=None):
    """CE on clean logits plus ``beta`` times the clean-to-adversarial KL.

    The inner maximiser starts from a small Gaussian jitter (the KL has zero
    gradient at ``x' = x``) and runs sign-gradient ascent on the KL.
    Returns ``(loss, param grads, x_adv)``.
    """
    sg = training_surrogate(net) if sg is None else sg
    rng = make_rng(cfg.seed) if rng is None else rng
    T = net.T
    trace_nat, z_nat = forward(net, encode(x, net, rng))
    B = x.shape[0]
    x_adv = x
    if cfg.trades_beta > 0 and cfg.steps > 0 and cfg.eps > 0:
        x_adv = project_box_linf(x + 0.001 * rng.standard_normal(x.shape), x, cfg.eps)
        p = np.exp(_log_softmax(z_nat))
        for _ in range(cfg.steps):
            tr, z = forward(net, encode(x_adv, net, rng))
            q = np.exp(_log_softmax(z))
            dl = np.broadcast_to((q - p) / T, tr.logits_t.shape).copy()
            g = backward_input(net, tr, dl, sg)
            x_adv = project_box_linf(x_adv + cfg.step_size * np.sign(g), x, cfg.eps)
    ce, dl_nat = loss("ce", trace_nat.logits_t, y)
    _, grads = backward_input(net, trace_nat, dl_nat, sg, param_grads=True)
    if cfg.trades_beta == 0:
        return ce, grads, x_adv
    trace_adv, z_adv = forward(net, encode(x_adv, net, rng))
    lp, lq = _log_softmax(z_nat), _log_softmax(z_adv)
    p, q = np.exp(lp), np.exp(lq)
    kl = (p * (lp - lq)).sum(axis=1)
    r = lp - lq
    beta = cfg.trades_beta
    d_nat = beta * p * (r - (p * r).sum(axis=1, keepdims=True)) / (B * T)
    d_adv = beta * (q - p) / (B * T)
    _, g_nat = backward_input(net, trace_nat, np.broadcast_to(d_nat, trace_nat.logits_t.shape),
                              sg, param_grads=True)
    _, g_adv = backward_input(net, trace_adv, np.broadcast_to(d_adv, trace_adv.logits_t.shape),
                              sg, param_grads=True)
    for name in grads:
        grads[name] = grads[name] + g_nat[name] + g_adv[name]
    return ce + beta * float(kl.mean()), grads, x_adv


def at_epoch(net, data, cfg, rng, velocity=None, sg=None):
    """One pass over ``data = (x, y)`` in shuffled mini-batches."""
    x_all, y_all = data
    velocity = {} if velocity is None else velocity
    sg = training_surrogate(net) if sg is None else sg
    model = SpikingClassifier(net, cfg.loss_kind)
    order = rng.permutation(len(y_all))
    losses, n_batches = [], 0
    params = net.parameters()
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        x, y = x_all[idx], y_all[idx]
        if cfg.method == "trades":
            value, grads, _ = trades_loss(net, x, y, cfg, rng, sg)
        else:
            x_train = x
            if cfg.method == "at" and cfg.eps > 0:
                x_train = pgd_perturb(model, x, y, cfg.eps, cfg.steps, cfg.step_size, sg, rng)
            value, grads = _param_grads(net, x_train, y, cfg.loss_kind, sg, rng)
        sgd_step(params, grads, cfg.lr, cfg.momentum, velocity)
        net.bump()
        losses.append(value)
        n_batches += 1
    if not all(math.isfinite(v) for v in losses):
        raise TrainingError("non-finite training loss")
    return net, {"loss": float(np.mean(losses)), "batches": n_batches}


def eval_accuracy(model, x, y, rng=None):
    """Argmax accuracy of mean-over-time logits."""
    if not isinstance(model, SpikingClassifier):
        model = SpikingClassifier(model)
    if len(y) == 0:
        return float("nan")
    return float(np.mean(model.predict(x, rng) == np.asarray(y)))


def train(net, train_data, cfg, test_data=None, log=None):
    """Run ``cfg.epochs`` epochs; returns per-epoch metrics."""
    rng = make_rng(cfg.seed)
    velocity = {}
    history = []
    sg = training_surrogate(net)
    for epoch in range(cfg.epochs):
        _, metrics = at_epoch(net, train_data, cfg, rng, velocity, sg)
        metrics["epoch"] = epoch
        if test_data is not None and (epoch == cfg.epochs - 1 or (epoch + 1) % 10 == 0):
            metrics["test_acc"] = eval_accuracy(net, *test_data)
        history.append(metrics)
        if log is not None:
            log(metrics)
    return history
