#!/usr/bin/env python3
"""Timing comparison of the compiled grid kernels against the numpy fallback.

Runs the raw kan contraction (forward and backward) and a full training step
(taped forward, backward sweep, Adam update) on a synthetic cohort, once per
available backend, and prints best-of-N wall times.

    python3 benchmarks/bench_kernels.py --repeat 100
"""

import argparse
import time

import numpy as np

import gcnkan.autodiff as ad
from gcnkan import kernels
from gcnkan.graph import build_adjacency
from gcnkan.model import init_params, model_forward
from gcnkan.synth import SynthSpec, generate_cohort
from gcnkan.training import TrainConfig, adam_step, cross_entropy


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_contraction(backend, n, width, grid_size, repeat):
    rng = np.random.default_rng(0)
    h = rng.random((n, width))
    coeffs = rng.standard_normal((width, width, grid_size))
    grid = np.arange(grid_size) / grid_size
    grad_out = rng.standard_normal((n, width))
    kernels.use_backend(backend)
    fwd = best_of(lambda: kernels.kan_forward(h, coeffs, grid), repeat)
    bwd = best_of(lambda: kernels.kan_backward(h, coeffs, grid, grad_out),
                  repeat)
    return fwd, bwd


def bench_model_step(backend, n_roi, hidden, grid_size, repeat):
    spec = SynthSpec(n_subjects_per_class=30, n_roi=n_roi,
                     signal_rois=(1, 4, 9), signal_strength=1.5,
                     correlation_blocks=((tuple(range(n_roi)), 0.3),), seed=0)
    table = generate_cohort(spec)
    graph = build_adjacency(table, 0.1)
    params = init_params("gcn-kan", np.random.default_rng(0), hidden=hidden,
                         grid_size=grid_size)
    config = TrainConfig(hidden=hidden, grid_size=grid_size)
    x = table.features[0][:, None]
    label = int(table.labels[0])
    kernels.use_backend(backend)

    def step():
        tape = ad.Tape()
        lifted, leaves = params.lift(tape)
        logits = model_forward(lifted, graph, x, tape=tape)
        grads = ad.backward(tape, cross_entropy(logits, label))
        adam_step(params, {name: grads[leaf]
                           for name, leaf in leaves.items()}, config)

    return best_of(step, repeat)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=50,
                        help="timing repetitions, best is reported")
    parser.add_argument("--nodes", type=int, default=90,
                        help="rows in the contraction / regions in the cohort")
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--grid-size", type=int, default=10)
    args = parser.parse_args(argv)

    default = kernels.active_backend
    rows = []
    for backend in kernels.available_backends():
        fwd, bwd = bench_contraction(backend, args.nodes, args.width,
                                     args.grid_size, args.repeat)
        step = bench_model_step(backend, args.nodes, args.width,
                                args.grid_size, args.repeat)
        rows.append((backend, fwd, bwd, step))
    kernels.use_backend(default)

    print(f"grid kernel timings, best of {args.repeat} "
          f"(N={args.nodes} width={args.width} grid={args.grid_size})")
    print(f"{'backend':<10}{'kan_forward':>14}{'kan_backward':>14}"
          f"{'train_step':>14}")
    for backend, fwd, bwd, step in rows:
        print(f"{backend:<10}{fwd * 1e3:>12.3f} ms{bwd * 1e3:>12.3f} ms"
              f"{step * 1e3:>12.3f} ms")
    if len(rows) == 2:
        by_name = {r[0]: r for r in rows}
        if "ext" in by_name and "numpy" in by_name:
            ratios = [by_name["numpy"][i] / by_name["ext"][i]
                      for i in (1, 2, 3)]
            print(f"{'speedup':<10}{ratios[0]:>12.2f} x{ratios[1]:>12.2f} x"
                  f"{ratios[2]:>12.2f} x")


if __name__ == "__main__":
    main()
