"""Wall-clock breakdown of the S1 scenario: weights, initial solve, time marching.

    python3 benchmarks/time_s1.py [--grid 128] [--steps 100]
"""
import argparse
import os
import time

from singular_pnp.config import parse_config
from singular_pnp.evolution import run
from singular_pnp.transform import prepare_initial
from singular_pnp.weights import prepare_weights

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=128)
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()
    cfg = parse_config(os.path.join(HERE, os.pardir, "configs", "s1.cfg"))
    cfg = cfg.replace(grid=(args.grid, args.grid), t_end=args.steps * cfg.dt)
    grid = cfg.make_grid()

    t0 = time.perf_counter()
    weights = prepare_weights(cfg.charges, 0.0, grid, snap=cfg.snap_charges, tol=cfg.quadrature_tol)
    t1 = time.perf_counter()
    initial = prepare_initial(*cfg.initial_fields(grid), weights)
    t2 = time.perf_counter()
    traj = run(initial, cfg.scheme(), weights, snapshot_every=10 ** 9, keep_snapshots=False)
    t3 = time.perf_counter()

    iters = sum(r.picard_iters for r in traj.diagnostics)
    print(f"grid {args.grid}^2, {args.steps} steps")
    print(f"  weights         {t1 - t0:8.3f} s")
    print(f"  initial state   {t2 - t1:8.3f} s")
    print(f"  time marching   {t3 - t2:8.3f} s  ({1e3 * (t3 - t2) / args.steps:.1f} ms/step, "
          f"{iters / args.steps:.2f} Picard iterations/step)")


if __name__ == "__main__":
    main()
