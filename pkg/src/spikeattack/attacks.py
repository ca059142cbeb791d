"""L-infinity attacks: PGD, MI-FGSM, APGD, Adam-PGD and SA-PGD.

A *model* is anything with ``loss_grad(x, y, sg, rng=None)`` returning
``(per-sample loss, logits, input gradient)``, ``predict(x)`` and a
``stochastic`` flag; :class:`~spikeattack.snn.SpikingClassifier` is the
main one.  All state is per sample, so a batch is a set of independent
trajectories.
"""

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import ContractError, as_tensor, make_rng, spawn

METHODS = ("pgd", "mifgsm", "apgd", "adampgd", "sapgd")

_DEFAULT_BETAS = {"sapgd": (0.5, 0.8), "adampgd": (0.8, 0.9)}


@dataclass
class AttackConfig:
    eps: float = 8 / 255
    n_iter: int = 100
    method: str = "sapgd"
    beta_m: float = None
    beta_v: float = None
    xi: float = 1e-12
    eot_samples: int = 1
    random_start: bool = False
    step_size: float = None    # fixed step for pgd / mifgsm
    eta0_factor: float = 2.0   # initial step of the adaptive schedule, in units of eps
    rho: float = 0.75
    mi_decay: float = 1.0
    n_restarts: int = 1
    assg_reset_on_restart: bool = True   # False carries ASSG statistics across restarts
    seed: int = 0
    record_iterates: bool = False

    def __post_init__(self):
        self.method = self.method.lower().replace("-", "").replace("_", "")
        if self.method not in METHODS:
            raise ContractError(f"unknown attack method {self.method!r}")
        if self.eps < 0:
            raise ContractError("eps must be non-negative")
        if self.n_iter < 1:
            raise ContractError("n_iter must be >= 1")
        if self.xi <= 0:
            raise ContractError("xi must be positive")
        bm, bv = _DEFAULT_BETAS.get(self.method, (0.9, 0.9))
        self.beta_m = bm if self.beta_m is None else self.beta_m
        self.beta_v = bv if self.beta_v is None else self.beta_v
        for name in ("beta_m", "beta_v"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ContractError(f"{name} must lie in (0, 1)")

    def fixed_step(self):
        if self.step_size is not None:
            return self.step_size
        if self.method == "mifgsm":
            return self.eps / self.n_iter
        return 2.5 * self.eps / self.n_iter


@dataclass
class AttackResult:
    x_adv: np.ndarray
    loss_trace: list
    best_loss_trace: list
    asr_trace: list
    best_loss_history: np.ndarray
    success: np.ndarray
    asr: float
    method: str = ""
    iterates: list = field(default_factory=list)
    step_records: list = field(default_factory=list)   # (max |t| per sample, eta per sample)
    diagnostics: list = field(default_factory=list)


def project_box_linf(x, x0, eps):
    """Clamp to the eps-ball around ``x0``, then to the unit box."""
    x = as_tensor(x)
    x0 = as_tensor(x0)
    if x.shape != x0.shape:
        raise ContractError(f"shape mismatch {x.shape} vs {x0.shape}")
    return np.clip(np.clip(x, x0 - eps, x0 + eps), 0.0, 1.0)


def _l1(a):
    return np.abs(a).sum(axis=1, keepdims=True)


def _eot_sum(model, x, y, K, sg, rng):
    losses = logits = grad = 0.0
    for r in spawn(rng, K):
        l, z, g = model.loss_grad(x, y, sg, rng=r)
        losses = losses + l
        logits = logits + z
        grad = grad + g
    return losses, logits, grad


def eot_gradient(model, x, y, K, sg, rng):
    """Mean input gradient over ``K`` independent encodings of ``x``.

    An adaptive surrogate must be frozen by the caller so every draw sees
    the same sharpness.
    """
    if K < 1:
        raise ContractError("EOT needs K >= 1")
    if sg.adaptive and not sg.state.frozen:
        raise ContractError("eot_gradient requires a frozen ASSG state")
    _, _, g = _eot_sum(model, x, y, K, sg, rng)
    return g / K


def _evaluate(model, x, y, sg, cfg, rng):
    if not getattr(model, "stochastic", False):
        return model.loss_grad(x, y, sg)
    K = max(1, cfg.eot_samples)
    first, rest = spawn(rng, 2)
    # the first draw also advances the adaptive state, then it is held fixed
    l, z, g = model.loss_grad(x, y, sg, rng=first)
    if K == 1:
        return l, z, g
    froze = sg.adaptive and not sg.state.frozen
    if froze:
        sg.state.freeze()
    try:
        l2, z2, g2 = _eot_sum(model, x, y, K - 1, sg, rest)
    finally:
        if froze:
            sg.state.unfreeze()
    return (l + l2) / K, (z + z2) / K, (g + g2) / K


class _Schedule:
    """Checkpointed step-size halving with restart from the best point.

    Checkpoints start at 22% of the budget; the gap shrinks by 3% of the
    budget per checkpoint down to 6%.  At a checkpoint a sample halves its
    step if fewer than ``rho`` of the steps since the previous checkpoint
    increased its loss, or if its best loss has not moved and its step was
    not halved last time.
    """

    def __init__(self, n_iter, B, eta0, rho, loss0):
        self.k = max(int(0.22 * n_iter), 1)
        self.k_min = max(int(0.06 * n_iter), 1)
        self.decr = max(int(0.03 * n_iter), 1)
        self.rho = rho
        self.eta = np.full((B, 1), float(eta0))
        self.losses = [loss0.copy()]
        self.counter = 0
        self.best_last = None
        self.reduced_last = np.ones(B, dtype=bool)

    def observe(self, loss, best):
        """Record a step's loss; return a mask of samples to halve and restart."""
        self.losses.append(loss.copy())
        if self.best_last is None:
            self.best_last = self.losses[0].copy()
        self.counter += 1
        if self.counter < self.k:
            return None
        hist = np.array(self.losses[-self.k - 1:])
        increases = (hist[1:] > hist[:-1]).sum(axis=0)
        osc = increases <= self.k * self.rho
        stalled = (~self.reduced_last) & (self.best_last >= best)
        reduce = osc | stalled
        self.reduced_last = reduce.copy()
        self.best_last = best.copy()
        self.eta[reduce] /= 2.0
        self.k = max(self.k - self.decr, self.k_min)
        self.counter = 0
        return reduce


def sa_pgd_step(m, v, grad, beta_m, beta_v, eta, xi):
    """One SA-PGD moment update; returns ``(m, v, t)`` with ``|t| <= eta``.

    Moments accumulate the per-sample L1-normalised gradient and squared
    gradient; ``t`` is the clipped step.  Samples whose gradient is all zero
    keep their moments and get ``t = 0``.
    """
    g1 = _l1(grad)
    g2 = (grad * grad).sum(axis=1, keepdims=True)
    has = g1 > 0
    m_upd = beta_m * m + np.divide(grad, g1, out=np.zeros_like(grad), where=has)
    # squares of tiny gradients can underflow even when the L1 norm does not
    v_upd = beta_v * v + np.divide(grad * grad, g2, out=np.zeros_like(grad), where=g2 > 0)
    m = np.where(has, m_upd, m)
    v = np.where(has, v_upd, v)
    t = np.clip(m / (np.sqrt(v) + xi) * eta, -eta, eta)
    return m, v, np.where(has, t, 0.0)


def _single_run(model, x0, y, cfg, sg, rng):
    method = cfg.method
    B = x0.shape[0]
    eps = cfg.eps
    start_rng, eval_rng = spawn(rng, 2)
    if sg is not None and sg.adaptive and cfg.assg_reset_on_restart:
        sg.state.reset()
    x = x0.copy()
    if cfg.random_start and eps > 0:
        x = project_box_linf(x0 + start_rng.uniform(-eps, eps, size=x0.shape), x0, eps)

    diagnostics = []
    active = np.ones(B, dtype=bool)

    def evaluate(x):
        l, z, g = _evaluate(model, x, y, sg, cfg, eval_rng)
        l = np.asarray(l, dtype=np.float64)
        bad = ~np.isfinite(l) | ~np.isfinite(g).all(axis=1)
        if np.any(bad & active):
            for b in np.flatnonzero(bad & active):
                diagnostics.append(f"sample {b}: non-finite loss or gradient; aborted")
            active[bad] = False
        g = np.where(bad[:, None], 0.0, g)
        l = np.where(bad, -np.inf, l)
        return l, z, g

    loss, logits, grad = evaluate(x)
    loss_best = loss.copy()
    x_best = x.copy()
    grad_best = grad.copy()
    fooled = np.argmax(logits, axis=1) != y
    x_fooled = x.copy()
    clean_ok = model.predict(x0) == y

    loss_trace = [float(np.mean(loss[active])) if active.any() else float("nan")]
    best_trace = [float(np.mean(loss_best[active])) if active.any() else float("nan")]
    asr_trace = [_ratio(fooled, clean_ok)]
    best_hist = [loss_best.copy()]
    iterates = [x.copy()] if cfg.record_iterates else []
    step_records = []

    adaptive = method in ("apgd", "adampgd", "sapgd")
    sched = _Schedule(cfg.n_iter, B, cfg.eta0_factor * eps, cfg.rho, loss) if adaptive else None
    eta_fixed = cfg.fixed_step()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    x_old = x.copy()
    n_grads = 0

    for i in range(cfg.n_iter):
        live = active[:, None]
        if method == "pgd":
            x_new = project_box_linf(x + eta_fixed * np.sign(grad), x0, eps)
        elif method == "mifgsm":
            n1 = _l1(grad)
            m = cfg.mi_decay * m + np.divide(grad, n1, out=np.zeros_like(grad), where=n1 > 0)
            x_new = project_box_linf(x + eta_fixed * np.sign(m), x0, eps)
        elif method == "apgd":
            a = 0.75 if i > 0 else 1.0
            delta = x - x_old
            x_old = x.copy()
            z = project_box_linf(x + sched.eta * np.sign(grad), x0, eps)
            x_new = project_box_linf(x + a * (z - x) + (1.0 - a) * delta, x0, eps)
        elif method == "adampgd":
            n_grads += 1
            m = cfg.beta_m * m + (1.0 - cfg.beta_m) * grad
            v = cfg.beta_v * v + (1.0 - cfg.beta_v) * grad * grad
            m_hat = m / (1.0 - cfg.beta_m ** n_grads)
            v_hat = v / (1.0 - cfg.beta_v ** n_grads)
            x_new = project_box_linf(x + sched.eta * m_hat / (np.sqrt(v_hat) + cfg.xi), x0, eps)
        else:  # sapgd
            m, v, t = sa_pgd_step(m, v, grad, cfg.beta_m, cfg.beta_v, sched.eta, cfg.xi)
            step_records.append((np.abs(t).max(axis=1), sched.eta.ravel().copy()))
            x_new = project_box_linf(x + t, x0, eps)
        x = np.where(live, x_new, x)

        loss, logits, grad = evaluate(x)
        if cfg.record_iterates:
            iterates.append(x.copy())
        pred_wrong = (np.argmax(logits, axis=1) != y) & active
        newly = pred_wrong & ~fooled
        x_fooled[newly] = x[newly]
        fooled |= pred_wrong
        improved = (loss > loss_best) & active
        x_best[improved] = x[improved]
        grad_best[improved] = grad[improved]
        loss_best[improved] = loss[improved]

        if adaptive:
            reduce = sched.observe(loss, loss_best)
            if reduce is not None and reduce.any():
                r = reduce & active
                x[r] = x_best[r]
                grad[r] = grad_best[r]

        loss_trace.append(float(np.mean(loss[active])) if active.any() else float("nan"))
        best_trace.append(float(np.mean(loss_best[active])) if active.any() else float("nan"))
        asr_trace.append(_ratio(fooled, clean_ok))
        best_hist.append(loss_best.copy())

    x_adv = np.where(fooled[:, None], x_fooled, x_best)
    return dict(x_adv=x_adv, loss_trace=loss_trace, best_trace=best_trace,
                asr_trace=asr_trace, best_hist=np.array(best_hist), iterates=iterates,
                step_records=step_records, diagnostics=diagnostics, loss_best=loss_best)


def _ratio(fooled, clean_ok):
    n = int(clean_ok.sum())
    return float((fooled & clean_ok).sum() / n) if n else float("nan")


def run_attack(model, x, y, cfg, sg=None, rng=None):
    """Dispatch on ``cfg.method``; handles restarts and final accounting."""
    x0 = as_tensor(x)
    y = np.asarray(y).astype(np.int64)
    if np.any(x0 < 0) or np.any(x0 > 1):
        raise ContractError("attack inputs must lie in [0, 1]")
    if getattr(model, "stochastic", False) and cfg.eot_samples < 1:
        raise ContractError("stochastic encoders need eot_samples >= 1")
    rng = make_rng(cfg.seed) if rng is None else rng
    runs = spawn(rng, cfg.n_restarts)
    best = None
    for r, run_rng in enumerate(runs):
        run_cfg = cfg if r == 0 else _with(cfg, random_start=True)
        out = _single_run(model, x0, y, run_cfg, sg, run_rng)
        if best is None:
            best = out
            continue
        # keep, per sample, a fooling point if any run found one, else the higher loss
        prev_ok = model.predict(best["x_adv"]) != y
        new_ok = model.predict(out["x_adv"]) != y
        take = (new_ok & ~prev_ok) | ((new_ok == prev_ok) & (out["loss_best"] > best["loss_best"]))
        best["x_adv"][take] = out["x_adv"][take]
        best["loss_best"][take] = out["loss_best"][take]
        best["diagnostics"] += out["diagnostics"]
    success = model.predict(best["x_adv"]) != y
    asr = compute_asr(model, x0, best["x_adv"], y)
    return AttackResult(best["x_adv"], best["loss_trace"], best["best_trace"],
                        best["asr_trace"], best["best_hist"], success, asr, cfg.method,
                        best["iterates"], best["step_records"], best["diagnostics"])


def _with(cfg, **changes):
    d = asdict(cfg)
    d.update(changes)
    return AttackConfig(**d)


def attack_baseline(method, model, x, y, cfg, sg=None, rng=None):
    if method.lower() not in ("pgd", "mifgsm", "apgd"):
        raise ContractError(f"{method!r} is not a baseline attack")
    return run_attack(model, x, y, _with(cfg, method=method), sg, rng)


def attack_adam_pgd(model, x, y, cfg, sg=None, rng=None):
    return run_attack(model, x, y, _with(cfg, method="adampgd"), sg, rng)


def attack_sa_pgd(model, x, y, cfg, sg=None, rng=None):
    return run_attack(model, x, y, _with(cfg, method="sapgd"), sg, rng)


def pgd_perturb(model, x, y, eps, steps, step_size, sg, rng=None):
    """Plain sign-gradient PGD from the clean point; returns the last iterate.

    This is the lean inner maximiser used during training.
    """
    x0 = as_tensor(x)
    xa = x0.copy()
    for _ in range(steps):
        _, _, g = model.loss_grad(xa, y, sg, rng=rng)
        xa = project_box_linf(xa + step_size * np.sign(g), x0, eps)
    return xa


def compute_asr(model, clean, adv, labels):
    """Fraction of cleanly-correct samples that the adversarial input flips."""
    y = np.asarray(labels)
    clean_ok = model.predict(clean) == y
    n = int(clean_ok.sum())
    if n == 0:
        warnings.warn("ASR undefined: no sample is classified correctly on clean input",
                      RuntimeWarning, stacklevel=2)
        return float("nan")
    flipped = model.predict(adv) != y
    return float((flipped & clean_ok).sum() / n)


def write_loss_trace(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mean_loss", "best_mean_loss", "asr_so_far"])
        for i, (l, b, a) in enumerate(zip(result.loss_trace, result.best_loss_trace,
                                          result.asr_trace)):
            w.writerow([i, l, b, a])


def write_result_manifest(result, cfg, path, surrogate="", seed=None):
    doc = {"method": cfg.method, "eps": cfg.eps, "n_iter": cfg.n_iter,
           "seed": cfg.seed if seed is None else seed, "final_asr": result.asr,
           "surrogate": surrogate, "asr_convention": "clean-correct subset",
           "diagnostics": result.diagnostics}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
