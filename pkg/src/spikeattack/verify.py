"""Executable property suites.  Each returns :class:`CheckResult` items."""

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .assg import AssgParams, AssgState
from .attacks import METHODS, AttackConfig, eot_gradient, run_attack
from .numerics import make_rng, spawn
from .snn import SpikingClassifier, init_network, relaxed_input_grad, soft_forward_grad_oracle
from .surrogate import (SurrogateSpec, alpha_bound, atan_g, certify_atan, certify_triangle,
                        concavity_margin, vanish_degree, vanish_degree_numeric,
                        validate_surrogate)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def surrogate_suite():
    def certs():
        reports = [certify_atan(a) for a in (0.5, 2.0, 8.0, 32.0)] + [certify_triangle()]
        worst = max(max(r.evenness_err, r.monotonicity_err, r.integral_err) for r in reports)
        return all(r.passed for r in reports) and worst <= 1e-4, f"worst error {worst:.2e}"

    def vanish():
        worst = 0.0
        for a in (0.5, 2.0, 8.0, 32.0):
            grid = np.linspace(0.0, 10.0 / a, 100)
            num = np.array([vanish_degree_numeric(lambda t: atan_g(t, a), v, breakpoints=(0.0,))
                            for v in grid])
            worst = max(worst, float(np.max(np.abs(num - vanish_degree(a, grid)))))
        return worst <= 1e-6, f"max |closed - numeric| {worst:.2e}"

    def counterexample():
        with warnings.catch_warnings():
            # the odd integrand exercises the integrator's divergence warning
            warnings.simplefilter("ignore")
            r = validate_surrogate(lambda t: t, np.linspace(-5, 5, 101))
        return (not r.evenness_ok) and (not r.integral_ok), "g(x)=x flagged"

    return [_timed("surrogate certification", certs),
            _timed("closed-form vs numeric vanishing degree", vanish),
            _timed("odd surrogate rejected", counterexample)]


def concavity_suite():
    def concave():
        worst = max(concavity_margin(a, np.linspace(0.0, 50.0 / a, 501)) for a in (0.5, 2.0, 8.0))
        return worst <= 1e-9, f"max second difference {worst:.2e}"

    def convex():
        m = concavity_margin(1.0, np.linspace(0.0, 5.0, 501), G=lambda x: x * x)
        return m > 1e-9, f"convex margin {m:.2e}"

    return [_timed("vanishing degree concave", concave),
            _timed("convex counterexample detected", convex)]


def bound_suite(n=100_000, seed=0):
    def check():
        rng = make_rng(seed)
        # (sampler, analytic mean of |x|)
        dists = {"uniform(0,2)": (lambda r: r.uniform(0.0, 2.0, n), 1.0),
                 "exponential(1)": (lambda r: r.exponential(1.0, n), 1.0),
                 "halfnormal(1)": (lambda r: np.abs(r.standard_normal(n)), math.sqrt(2 / math.pi))}
        worst = -math.inf
        for (draw, mean), r in zip(dists.values(), spawn(rng, len(dists))):
            x = draw(r)
            for A in (0.3, 0.5, 0.87):
                alpha = alpha_bound(mean, A)
                worst = max(worst, float(vanish_degree(alpha, x).mean()) - A)
        return worst <= 0.01, f"max mean G - A {worst:.4f}"

    return [_timed("expected vanishing below bound", check)]


def stbp_suite(seeds=20, tol=1e-5):
    def check():
        worst = 0.0
        for kind in ("LIF", "LIF2", "IF", "PSN"):
            for detach in (False, True):
                for T in (1, 4):
                    for seed in range(seeds):
                        rng = make_rng(seed)
                        net = init_network(rng, 6, (8, 8), 3, kind=kind, T=T, gain=2.0,
                                           detach_reset=detach)
                        x = rng.uniform(0.0, 1.0, (4, 6))
                        y = rng.integers(0, 3, 4)
                        a = relaxed_input_grad(net, x, y, 2.0)
                        b = soft_forward_grad_oracle(net, x, y, 2.0)
                        worst = max(worst, float(np.abs(a - b).max() / np.abs(b).max()))
        return worst <= tol, f"max relative error {worst:.2e}"

    return [_timed("STBP matches finite differences", check)]


def _toy_snn(seed=0, d=8, encoder="direct"):
    rng = make_rng(seed)
    net = init_network(rng, d, (8, 8), 2, kind="LIF", T=4, encoder=encoder, gain=3.0)
    x = rng.uniform(0.0, 1.0, (20, d))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        y = SpikingClassifier(net).predict(x)
    return SpikingClassifier(net, "ce"), x, y


def feasibility_suite(eps=8 / 255, n_iter=100):
    def check():
        model, x0, y = _toy_snn()
        count, clip_ok, mono_ok, feasible = 0, True, True, True
        for method in METHODS:
            cfg = AttackConfig(eps=eps, n_iter=n_iter, method=method, record_iterates=True)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                r = run_attack(model, x0, y, cfg,
                               SurrogateSpec.assg(AssgState(AssgParams())))
            for it in r.iterates[1:]:
                count += it.shape[0]
                feasible &= bool(np.all(it >= np.maximum(x0 - eps, 0.0))
                                 and np.all(it <= np.minimum(x0 + eps, 1.0)))
            if method == "sapgd":
                clip_ok = all(np.all(t <= eta) for t, eta in r.step_records)
            if method in ("apgd", "sapgd"):
                mono_ok &= bool(np.all(np.diff(r.best_loss_history, axis=0) >= 0))
        ok = feasible and clip_ok and mono_ok and count >= 10_000
        return ok, (f"{count} iterates, feasible={feasible}, sapgd clip={clip_ok}, "
                    f"best-loss monotone={mono_ok}")

    return [_timed("attack feasibility and clipping", check)]


def assg_suite():
    def hand():
        s = AssgState(AssgParams(M0=1.0, D0=0.0, beta1=0.9, beta2=0.9))
        s.update([np.full((1, 1, 1), 0.5)])
        M, D = s.M[0].item(), s.D[0].item()
        # 1 - 0.9 is not representable, so "exact" means equal up to a few ulps
        ok = math.isclose(M, 0.95, rel_tol=1e-15) and math.isclose(D, 0.045, rel_tol=1e-15)
        return ok, f"M1={M!r}, D1={D!r}"

    def fixed_point():
        c = 0.37
        s = AssgState()
        for _ in range(200):
            s.update([np.full((1, 2, 3), c)])
        err = float(np.abs(s.M[0] - c).max())
        return err <= 1e-6, f"|M - c| = {err:.2e}"

    def frozen():
        model, x, y = _toy_snn(seed=1, encoder="poisson")
        sg = SurrogateSpec.assg(AssgState())
        model.loss_grad(x, y, sg, rng=make_rng(5))
        sg.state.freeze()
        before = sg.state.snapshot()
        for r in spawn(make_rng(6), 10):
            eot_gradient(model, x, y, 10, sg, r)
        after = sg.state.snapshot()
        same = all(np.array_equal(a, b) for a, b in zip(before[0] + before[1], after[0] + after[1]))
        return same, "grids unchanged" if same else "grids changed"

    return [_timed("ASSG one-step values", hand), _timed("ASSG fixed point", fixed_point),
            _timed("frozen ASSG bit-identical under EOT", frozen)]


def eot_variance_ratio(repeats=100, seed=0):
    """Total variance of the K=10 EOT gradient over the K=1 one, fixed input."""
    rng = make_rng(seed)
    net = init_network(rng, 16, (16, 16), 2, kind="LIF", T=4, encoder="poisson", gain=3.0)
    model = SpikingClassifier(net, "ce")
    x = rng.uniform(0.2, 0.8, (1, 16))
    y = np.array([0])
    sg = SurrogateSpec.atan(2.0)
    var = {}
    for K in (1, 10):
        grads = np.array([eot_gradient(model, x, y, K, sg, r)[0]
                          for r in spawn(make_rng(seed + K), repeats)])
        var[K] = float(grads.var(axis=0, ddof=1).sum())
    return var[10] / var[1]


def eot_suite():
    def check():
        ratio = eot_variance_ratio()
        return ratio <= 0.15, f"variance ratio {ratio:.3f}"

    return [_timed("EOT variance scaling", check)]


def backend_suite():
    def check():
        if not kernels.compiled_available():
            return True, "compiled backend not built; python only"
        rng = make_rng(3)
        I = rng.normal(0.5, 1.0, (4, 5, 7))
        dS = rng.normal(size=I.shape)
        SG = rng.uniform(0.0, 1.0, size=I.shape)
        outs = {}
        prev = kernels.backend()
        try:
            for name in ("python", "cython"):
                kernels.use(name)
                V, S, U = kernels.recur_forward(I, 0.5, 0.5, 1.0)
                dI = kernels.recur_backward(dS, V, S, SG, 0.5, 0.5, False)
                outs[name] = (V, S, U, dI)
        finally:
            kernels.use(prev)
        err = max(float(np.abs(a - b).max()) for a, b in zip(outs["python"], outs["cython"]))
        return err <= 1e-12, f"max backend difference {err:.1e}"

    return [_timed("kernel backends agree", check)]


SUITES = {"surrogate": surrogate_suite, "concavity": concavity_suite,
          "bound": bound_suite, "stbp": stbp_suite, "feasibility": feasibility_suite,
          "assg": assg_suite, "eot": eot_suite, "backend": backend_suite}


def run_all(names=None):
    results = []
    for name in names or SUITES:
        results.extend(SUITES[name]())
    return results
