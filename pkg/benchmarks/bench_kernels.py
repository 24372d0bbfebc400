"""Time the jitted kernels against the pure-numpy fallback.

The JIT switch is read at import time, so each path runs in its own
interpreter. Each workload is warmed up once (to exclude compilation) and then
timed as the best of ``--repeat`` runs.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from qpost import USING_NUMBA
    from qpost.ising import IsingModel, sample_ising_gibbs
    from qpost.logistic import generate_logistic_data, make_design
    from qpost.prior import PriorSpec
    from qpost.sampler import ChainConfig, exact_posterior_oracle, run_chain

    repeat, scale = int(sys.argv[1]), float(sys.argv[2])
    rng = np.random.default_rng(0)
    ts = np.zeros(20); ts[:3] = 1.0
    big = generate_logistic_data(ts, make_design(200, 20, rng), rng)
    small = generate_logistic_data([1.0, 0, 0], make_design(30, 3, rng), rng)
    a = rng.normal(0, 0.4, (10, 10)); model = IsingModel(0.5 * (a + a.T))
    iters = int(50_000 * scale)
    work = {
        "chain d=20 n=200": lambda: run_chain(big, PriorSpec(20, 5.0), ChainConfig(iters, seed=1)),
        "gibbs p=10": lambda: sample_ising_gibbs(model, int(20_000 * scale), np.random.default_rng(1)),
        "oracle d=3 m=40": lambda: exact_posterior_oracle(small, PriorSpec(3, 2.0), grid=(None, 40)),
    }
    out = {"numba": USING_NUMBA, "seconds": {}}
    for name, fn in work.items():
        fn()
        best = float("inf")
        for _ in range(repeat):
            t = time.perf_counter(); fn(); best = min(best, time.perf_counter() - t)
        out["seconds"][name] = best
    print(json.dumps(out))
""")


def run(disable: bool, repeat: int, scale: float) -> dict:
    env = dict(os.environ, QPOST_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat), str(scale)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="shrink the workloads tenfold")
    args = ap.parse_args()
    scale = 0.1 if args.quick else 1.0
    fast, slow = run(False, args.repeat, scale), run(True, args.repeat, scale)
    if not fast["numba"]:
        print("warning: numba unavailable, both columns use the fallback")
    print(f"{'workload':<20}{'numba s':>10}{'numpy s':>10}{'speedup':>10}")
    for name, t_fast in fast["seconds"].items():
        t_slow = slow["seconds"][name]
        print(f"{name:<20}{t_fast:>10.3f}{t_slow:>10.3f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
