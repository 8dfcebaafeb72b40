"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints microseconds per call for each kernel and backend, the speedup, and
the largest output difference between backends. A full FSQ training step is
timed too, by running a short point_reacher session under each backend in a
subprocess (the backend is chosen at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fsq.kernels import available_backends

STEP_SNIPPET = """
import time, numpy as np
from fsq.agent import FsqAgent, train
from fsq.core import ActionSpaceSpec, AgentConfig
from fsq.envs import point_reacher
env = point_reacher(rng=np.random.default_rng(0))
agent = FsqAgent(2, ActionSpaceSpec.box(2), AgentConfig(), rng=np.random.default_rng(1),
                 replay_rng=np.random.default_rng(2))
env.descriptor
t = time.perf_counter()
train(agent, env, {episodes}, np.random.default_rng(3))
print((time.perf_counter() - t) / agent.global_step * 1e6)
"""


def kernel_cases(rng):
    for B, I, H, O in [(1, 4, 128, 6), (32, 4, 128, 6), (32, 9, 128, 3), (256, 16, 128, 12)]:
        x = rng.normal(size=(B, I))
        W1, b1 = rng.normal(size=(I, H)), rng.normal(size=H)
        W2, b2 = rng.normal(size=(H, O)), rng.normal(size=O)
        target = rng.normal(size=(B, O))
        mask = rng.random((B, O)) < 0.4
        weights = rng.random(B)
        yield f"B={B} I={I} H={H} O={O}", (x, W1, b1, W2, b2, target, mask, weights)


def time_call(fn, repeat):
    return timeit.timeit(fn, number=repeat) / repeat * 1e6


def bench_kernels(repeat):
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'case':<26} {'kernel':<10} " + " ".join(f"{name + ' us':>12}" for name in backends)
          + f" {'speedup':>8} {'max diff':>10}")
    for label, (x, W1, b1, W2, b2, target, mask, weights) in kernel_cases(rng):
        I, H, O = W1.shape[0], W1.shape[1], W2.shape[1]
        times = {"forward": {}, "loss_grad": {}}
        outputs = {}
        for name, k in backends.items():
            grads = [np.empty((I, H)), np.empty(H), np.empty((H, O)), np.empty(O)]
            times["forward"][name] = time_call(lambda: k.forward(x, W1, b1, W2, b2), repeat)
            times["loss_grad"][name] = time_call(
                lambda: k.loss_grad(x, W1, b1, W2, b2, target, mask, weights, *grads), repeat)
            loss, pred = k.loss_grad(x, W1, b1, W2, b2, target, mask, weights, *grads)
            outputs[name] = np.concatenate([[loss], pred.ravel()] + [g.ravel() for g in grads])
        diff = float(np.max(np.abs(outputs["python"] - outputs["cython"]))) if len(outputs) == 2 else 0.0
        for kernel, by_backend in times.items():
            speedup = by_backend["python"] / by_backend["cython"] if "cython" in by_backend else 1.0
            cells = " ".join(f"{by_backend[name]:>12.1f}" for name in backends)
            print(f"{label:<26} {kernel:<10} {cells} {speedup:>8.2f} {diff:>10.1e}")

    n = 300_000
    params = [rng.normal(size=n) for _ in range(4)]
    cells = []
    for name, k in backends.items():
        p, g, m, v = (a.copy() for a in params)
        v = np.abs(v)
        cells.append(time_call(lambda: k.adam_update(p, g, m, v, 5e-4, 0.9, 0.999, 1e-8, 10), max(1, repeat // 20)))
    print(f"{'n=' + str(n):<26} {'adam':<10} " + " ".join(f"{c:>12.1f}" for c in cells)
          + f" {cells[0] / cells[-1]:>8.2f}")

    cap = 1 << 16
    tree = np.zeros(2 * cap)
    leaves = rng.random(cap)
    tree[cap:] = leaves
    for node in range(cap - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]
    u = rng.random(32) * tree[1]
    cells = [time_call(lambda: k.sumtree_find(tree, u, cap), repeat) for k in backends.values()]
    print(f"{'cap=' + str(cap) + ' batch=32':<26} {'tree find':<10} " + " ".join(f"{c:>12.1f}" for c in cells)
          + f" {cells[0] / cells[-1]:>8.2f}")


def bench_training_step(episodes):
    print(f"\nFSQ training step on point_reacher ({episodes} episodes, us/step):")
    for name, flag in (("cython", "0"), ("python", "1")):
        env = dict(os.environ, FSQ_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(episodes=episodes)],
                             capture_output=True, text=True, env=env, check=True)
        print(f"  {name:<8} {float(out.stdout):8.1f}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=2000)
    parser.add_argument("--episodes", type=int, default=40, help="episodes for the end-to-end step timing")
    args = parser.parse_args(argv)
    bench_kernels(args.repeat)
    bench_training_step(args.episodes)


if __name__ == "__main__":
    main()
