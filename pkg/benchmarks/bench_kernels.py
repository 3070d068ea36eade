"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each case runs on identical inputs under both backends; results are checked
for bitwise agreement before the timings are reported.
"""
import argparse
import time

import numpy as np

from mfg_grid.dispatch import build_kkt_lcp
from mfg_grid.grid_model import load_network
from mfg_grid.kernels import backends
from mfg_grid.persist import _data_path
from mfg_grid.prosumer import EfficiencyParams, action_model


def _lemke_case():
    net = load_network(_data_path("ieee14.net"))
    b = np.random.default_rng(0).uniform(150, 300, net.n_buses)
    prob = build_kkt_lcp(net, b)
    m, u = prob.m, prob.u

    def run(k):
        return k.lemke(m, u, 10 * u.size ** 2)[0]
    return "lemke 14-bus dispatch", run


def _cyclic_case(G=100):
    P = np.random.default_rng(1).uniform(150, 250, 24)
    mdl = action_model(G, None, EfficiencyParams(0.97))

    def run(k):
        V = np.zeros((24, mdl.G))
        k.solve_cyclic(P, mdl.coef, mdl.lo, mdl.wt, 0.999, 1e-6, 100_000, V, mdl.aligned)
        return V
    return f"cyclic value function {G}x24", run


def _sweep_case(G=100, sweeps=200):
    P = np.random.default_rng(2).uniform(150, 250, 24)
    mdl = action_model(G, None, EfficiencyParams(0.97))

    def run(k):
        V = np.zeros((24, mdl.G))
        k.value_iteration(P, mdl.coef, mdl.lo, mdl.wt, 0.999, 0.0, sweeps, V, mdl.aligned)
        return V
    return f"{sweeps} Bellman sweeps {G}x24", run


def _batch_case(n=200, G=100):
    rng = np.random.default_rng(3)
    P = rng.uniform(150, 250, (n, 24))
    mdl = action_model(G, None, EfficiencyParams(0.97))
    rows = np.arange(n, dtype=np.int64)

    def run(k):
        V = np.zeros((n, 24, mdl.G))
        k.solve_cyclic_batch(P, rows, mdl.coef, mdl.lo, mdl.wt, 0.999, 1e-6, 100_000, V,
                             mdl.aligned)
        return V
    return f"batch of {n} value functions", run


def _select_case(n=2800, G=100):
    rng = np.random.default_rng(4)
    mdl = action_model(G, None, EfficiencyParams(0.97))
    V = np.cumsum(rng.uniform(0, 300, (n, 24, mdl.G)), axis=2)
    soc = rng.integers(0, mdl.G, n)
    price = rng.uniform(150, 250, n)
    rows = np.arange(n, dtype=np.int64)

    def run(k):
        out = np.empty(n, dtype=np.int64)
        k.select_actions(V, rows, soc, price, 5, mdl.coef, mdl.lo, mdl.wt, mdl.actions,
                         0.999, 1e-12, out)
        return out
    return f"action choice for {n} agents", run


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impl = backends()
    if "cython" not in impl:
        print("compiled kernels are not built; only the numpy backend is available")
    cases = [_lemke_case(), _cyclic_case(), _sweep_case(), _batch_case(), _select_case()]
    print(f"{'case':34s} {'numpy':>11s} {'cython':>11s} {'speedup':>8s}  agree")
    for name, run in cases:
        ref = run(impl["python"])
        t_py = _time(lambda: run(impl["python"]), args.repeat)
        if "cython" in impl:
            agree = np.array_equal(ref, run(impl["cython"]))
            t_cy = _time(lambda: run(impl["cython"]), args.repeat)
            print(f"{name:34s} {t_py * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms {t_py / t_cy:7.1f}x  "
                  f"{'yes' if agree else 'NO'}")
        else:
            print(f"{name:34s} {t_py * 1e3:9.2f}ms {'-':>11s}")


if __name__ == "__main__":
    main()
