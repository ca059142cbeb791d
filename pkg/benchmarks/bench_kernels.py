"""Time the compiled and numpy membrane recurrences, and one attack run on each.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

from spikeattack import kernels
from spikeattack.attacks import AttackConfig, run_attack
from spikeattack.numerics import make_rng
from spikeattack.snn import SpikingClassifier, init_network
from spikeattack.surrogate import SurrogateSpec

SHAPES = [(4, 100, 64), (4, 500, 64), (8, 500, 256)]


def bench_recurrence(repeat):
    rows = []
    for shape in SHAPES:
        r = make_rng(0)
        I = r.normal(0.8, 1.0, shape)
        dS = r.standard_normal(shape)
        SG = r.uniform(0.0, 1.0, shape)
        V, S, _ = kernels.recur_forward(I, 0.5, 0.5, 1.0)
        times = {}
        for name in ("python", "cython"):
            kernels.use(name)
            fwd = min(timeit.repeat(lambda: kernels.recur_forward(I, 0.5, 0.5, 1.0),
                                    number=20, repeat=repeat)) / 20
            bwd = min(timeit.repeat(lambda: kernels.recur_backward(dS, V, S, SG, 0.5, 0.5, False),
                                    number=20, repeat=repeat)) / 20
            times[name] = (fwd, bwd)
        rows.append((shape, times))
    return rows


def bench_attack(repeat):
    rng = make_rng(0)
    net = init_network(rng, 64, (64, 64), 4, T=4, gain=4.0)
    model = SpikingClassifier(net, "tet")
    x = rng.uniform(0.0, 1.0, (500, 64))
    y = model.predict(x)
    cfg = AttackConfig(n_iter=20, method="sapgd")
    out = {}
    for name in ("python", "cython"):
        kernels.use(name)
        out[name] = min(timeit.repeat(lambda: run_attack(model, x, y, cfg, SurrogateSpec.atan(2.0)),
                                      number=1, repeat=repeat))
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    prev = kernels.backend()
    try:
        print(f"{'shape (T,B,N)':>16} {'fwd py ms':>10} {'fwd cy ms':>10} {'bwd py ms':>10} "
              f"{'bwd cy ms':>10} {'speedup':>8}")
        for shape, t in bench_recurrence(args.repeat):
            py, cy = t["python"], t["cython"]
            speed = (py[0] + py[1]) / (cy[0] + cy[1])
            print(f"{str(shape):>16} {py[0] * 1e3:10.3f} {cy[0] * 1e3:10.3f} {py[1] * 1e3:10.3f} "
                  f"{cy[1] * 1e3:10.3f} {speed:7.2f}x")
        a = bench_attack(args.repeat)
        print(f"20-iteration SA-PGD on 500 samples: python {a['python']:.3f}s, "
              f"cython {a['cython']:.3f}s ({a['python'] / a['cython']:.2f}x)")
    finally:
        kernels.use(prev)


if __name__ == "__main__":
    main()
