"""Compiled vs NumPy kernels on WMMSE phase subproblems.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from risre import _backend
from risre.channel import generate_channel
from risre.config import PhaseConstraint, default_config
from risre.det_equiv import de_fixed_point
from risre.metrics import PowerAllocation
from risre.phase_opt import (build_A, exact_mm_quadratic, initial_phase, nsp_gemm_quadratic,
                             wmmse_state)


def instance(n_r: int, seed: int = 0):
    cfg = default_config(20).replace(N_R=n_r, M=32)
    model = generate_channel(cfg, seed)
    phi = initial_phase(n_r, PhaseConstraint.cps()).phi
    state = de_fixed_point(model, phi, PowerAllocation.equal(cfg, model), cfg.sigma2)
    ws = wmmse_state(model.H1, phi, build_A(model, state.psi), cfg.sigma2)
    return ws.Mh, ws.c


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        _backend.get("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")
    print(f"{'N_R':>4} {'set':>4} {'solver':>6} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for n_r in (16, 32, 64):
        Mh, c = instance(n_r)
        for pc in (PhaseConstraint.cps(), PhaseConstraint.dps(2)):
            start = initial_phase(n_r, pc)
            for name, solver in (("gemm", nsp_gemm_quadratic), ("mm", exact_mm_quadratic)):
                res = {}
                for be in ("python", "cython"):
                    res[be] = best_time(lambda: solver(Mh, c, pc, start, backend=be),
                                        args.repeat)
                a = solver(Mh, c, pc, start, backend="python").relaxed
                b = solver(Mh, c, pc, start, backend="cython").relaxed
                assert np.allclose(a, b, atol=1e-9), "backends disagree"
                tag = "cps" if not pc.is_discrete else f"b{pc.bits}"
                print(f"{n_r:>4} {tag:>4} {name:>6} {1e3 * res['python']:>10.3f} "
                      f"{1e3 * res['cython']:>10.3f} {res['python'] / res['cython']:>7.1f}x")


if __name__ == "__main__":
    main()
