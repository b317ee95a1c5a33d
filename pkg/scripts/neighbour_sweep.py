"""Embedded neighbours of the critical shape: does the bridge touch?

Prints the minimum gap every 0.05 time units for each initial gap.

    python3 scripts/neighbour_sweep.py [--etas 0.01 0.02 0.04] [--nodes 512] [--max-t 1]
"""
import argparse

from stefanloss.evolution import StepConfig, initial_state, run
from stefanloss.shapegen import ShapeSpec, make_dumbbell


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--etas", type=float, nargs="+", default=[0.01, 0.02, 0.04])
    ap.add_argument("--nodes", type=int, default=512)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--max-t", type=float, default=1.0)
    args = ap.parse_args()
    every = max(1, round(0.05 / args.dt))
    for eta in args.etas:
        frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=eta, nodes=args.nodes)).frame
        cfg = StepConfig(dt=args.dt, max_t=args.max_t)
        res = run(initial_state(frame, cfg), cfg, frame_every=every)
        touch = res.event("firstTouch")
        print(f"eta={eta:g} status={res.status} t_touch={touch.t if touch else None} "
              f"rebaselines={res.final.rebaselines}")
        print("  " + " ".join(f"{s.t:.2f}:{s.ev.min_gap:.4f}" for s in res.frames))


if __name__ == "__main__":
    main()
