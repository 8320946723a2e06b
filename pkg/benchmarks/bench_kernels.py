"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Reports microseconds per call
for each kernel at several buffer sizes, then wall time per training step
for a small TD3 run under each backend (the step figure uses a subprocess so
the backend is picked at import, as in normal use).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qmlp_rl import _pykernels

try:
    from qmlp_rl import _ckernels
except ImportError:
    _ckernels = None

SIZES = (1_000, 20_000, 150_000)

STEP_SNIPPET = """
import time
from qmlp_rl.algorithms import TrainConfig, make_agent, train
from qmlp_rl.envs import make_env
from qmlp_rl.kernels import BACKEND
from qmlp_rl.networks import ArchitectureConfig
env = make_env("pendulum")
cfg = TrainConfig(algo="td3", total_steps={steps}, start_steps=100, eval_every={steps}, eval_episodes=1)
agent = make_agent(ArchitectureConfig("qmlp", 64, kappa=1.0), env, cfg, seed=0)
t0 = time.perf_counter()
train(agent, env, cfg, seed=0)
print(BACKEND, (time.perf_counter() - t0) / {steps} * 1e3)
"""


def _time(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number * 1e6


def bench_kernels(impls):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'size':>9}" + "".join(f"{name:>12}" for name in impls) + "   (us/call)")
    for n in SIZES:
        value, g0, m, v = rng.normal(size=n), rng.normal(size=n), np.zeros(n), np.zeros(n)
        grad = g0.copy()
        other = rng.normal(size=n)
        number = max(10, 2_000_000 // n)
        cases = {
            # adam zeroes grad; refill it so m and v do not decay into subnormals
            "adam_update": lambda k: (np.copyto(grad, g0),
                                      k.adam_update(value, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)),
            "soft_update": lambda k: k.soft_update(value, other, 0.005),
            "all_finite": lambda k: k.all_finite(value),
        }
        for name, call in cases.items():
            row = [_time(lambda: call(k), number) for k in impls.values()]
            print(f"{name:<14}{n:>9}" + "".join(f"{t:>12.2f}" for t in row))


def bench_steps(steps):
    for pure in ("", "1"):
        env = {**os.environ, "QMLP_RL_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(steps=steps)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"train step ({out[0]}): {float(out[1]):.3f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=2000, help="training steps for the end-to-end timing")
    args = parser.parse_args()
    impls = {"python": _pykernels}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the fallback only")
    bench_kernels(impls)
    bench_steps(args.steps)


if __name__ == "__main__":
    main()
