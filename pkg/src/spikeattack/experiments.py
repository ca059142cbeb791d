"""Config-driven experiment pipelines: data, training, attacks and sweeps."""

import os
from dataclasses import replace

from .assg import AssgParams, AssgState
from .attacks import AttackConfig, run_attack
from .data import gen_data, ingest_idx, read_dataset
from .numerics import make_rng
from .snn import SpikingClassifier, init_network
from .surrogate import SurrogateSpec
from .train import eval_accuracy, train


def assg_params(attack, **overrides):
    kw = dict(A=attack.A, beta1=attack.beta1, beta2=attack.beta2, gamma=attack.gamma,
              M0=attack.M0, D0=attack.D0)
    kw.update(overrides)
    return AssgParams(**kw)


def build_surrogate(attack, kind=None, alpha=None, **assg_overrides):
    """Surrogate for an attack run; ``kind`` and ``alpha`` override the config."""
    kind = kind or attack.surrogate
    if kind == "assg":
        return SurrogateSpec.assg(AssgState(assg_params(attack, **assg_overrides)))
    if kind == "atan":
        return SurrogateSpec.atan(attack.alpha if alpha is None else alpha)
    if kind == "triangle":
        return SurrogateSpec.triangle()
    raise ValueError(f"unknown surrogate {kind!r}")


def load_data(cfg, base_dir="."):
    """``(x_train, y_train, x_test, y_test)`` according to ``cfg.data``."""
    d = cfg.data
    if d.source == "synthetic":
        return gen_data(d.n_train, d.n_test, d.dim, d.classes, d.separation, d.sigma, d.seed)
    if d.source == "dir":
        return read_dataset(os.path.join(base_dir, d.dir))

    def p(name):
        return os.path.join(base_dir, getattr(d, name))

    xtr, ytr = ingest_idx(p("idx_train_images"), p("idx_train_labels"), d.idx_side, d.n_train)
    xte, yte = ingest_idx(p("idx_test_images"), p("idx_test_labels"), d.idx_side, d.n_test)
    return xtr, ytr, xte, yte


def build_network(cfg, n_inputs, n_classes):
    m = cfg.model
    return init_network(make_rng(cfg.train.seed), n_inputs, tuple(m.hidden), n_classes,
                        kind=m.neuron, T=m.T, encoder=m.encoder, lam=m.lam, v_th=m.v_th,
                        gain=m.gain, detach_reset=m.detach_reset)


def train_model(cfg, data, log=None):
    xtr, ytr, xte, yte = data
    n_classes = int(max(ytr.max(), yte.max())) + 1
    net = build_network(cfg, xtr.shape[1], n_classes)
    history = train(net, (xtr, ytr), cfg.train, test_data=(xte, yte), log=log)
    return net, history


def attack_config(cfg, method=None, n_iter=None):
    a = cfg.attack
    return AttackConfig(eps=a.eps, n_iter=a.n_iter if n_iter is None else n_iter,
                        method=method or a.method, eot_samples=a.eot_samples,
                        random_start=a.random_start,
                        assg_reset_on_restart=a.assg_reset_on_restart, seed=a.seed)


def classifier(cfg, net):
    return SpikingClassifier(net, cfg.attack.loss, eval_seed=cfg.attack.seed)


def attack_subset(cfg, x, y):
    n = min(cfg.attack.n_samples, len(y))
    return x[:n], y[:n]


def sweep_fig4(model, x, y, cfg):
    """ASR of fixed-sharpness atan against ASSG over its ``A`` grid.

    Returns rows ``(surrogate, parameter, asr)``: one per alpha, then one
    per A, all attacked with ``cfg.sweep.fig4_method``.
    """
    acfg = attack_config(cfg, method=cfg.sweep.fig4_method)
    rows = []
    for alpha in cfg.sweep.alpha_grid:
        r = run_attack(model, x, y, acfg, SurrogateSpec.atan(alpha))
        rows.append(("atan", float(alpha), r.asr))
    for A in cfg.sweep.A_grid:
        r = run_attack(model, x, y, acfg, build_surrogate(cfg.attack, "assg", A=A))
        rows.append(("assg", float(A), r.asr))
    return rows


def sweep_fig5(model, x, y, cfg):
    """ASR matrix of attack methods by iteration budget, all with ASSG."""
    rows = []
    for method in cfg.sweep.methods:
        row = []
        for budget in cfg.sweep.budgets:
            r = run_attack(model, x, y, attack_config(cfg, method, budget),
                           build_surrogate(cfg.attack, "assg"))
            row.append(r.asr)
        rows.append((method, row))
    return rows


def sweep_gamma(model, x, y, cfg):
    """One ASR per relaxation weight in ``cfg.sweep.gamma_grid``."""
    acfg = attack_config(cfg)
    return [run_attack(model, x, y, acfg, build_surrogate(cfg.attack, "assg", gamma=g)).asr
            for g in cfg.sweep.gamma_grid]


def end_to_end(cfg, seed, log=None):
    """Train one robust model and measure the three ablation comparisons.

    Returns a dict with the clean accuracy and every ASR that enters the
    comparisons, so callers can check the inequalities themselves.
    """
    cfg = replace(cfg, data=replace(cfg.data, seed=seed), train=replace(cfg.train, seed=seed),
                  attack=replace(cfg.attack, seed=seed))
    data = load_data(cfg)
    net, _ = train_model(cfg, data, log=log)
    model = classifier(cfg, net)
    x, y = attack_subset(cfg, data[2], data[3])
    out = {"seed": seed, "clean_acc": eval_accuracy(model, data[2], data[3])}

    base = attack_config(cfg, n_iter=100)
    out["assg_sapgd"] = run_attack(model, x, y, replace(base, method="sapgd"),
                                   build_surrogate(cfg.attack, "assg")).asr
    out["triangle_pgd"] = run_attack(model, x, y, replace(base, method="pgd"),
                                     SurrogateSpec.triangle()).asr
    sweep_cfg = replace(cfg, sweep=replace(cfg.sweep, fig4_method="sapgd"),
                        attack=replace(cfg.attack, n_iter=100))
    rows = sweep_fig4(model, x, y, sweep_cfg)
    out["best_fixed_alpha"] = max(r[2] for r in rows if r[0] == "atan")
    out["best_assg_A"] = max(r[2] for r in rows if r[0] == "assg")
    out["fig4_rows"] = rows
    long = attack_config(cfg, n_iter=400)
    out["sapgd_400"] = run_attack(model, x, y, replace(long, method="sapgd"),
                                  build_surrogate(cfg.attack, "assg")).asr
    out["adampgd_400"] = run_attack(model, x, y, replace(long, method="adampgd"),
                                    build_surrogate(cfg.attack, "assg")).asr
    return out

