"""Overlap onset time of the critical dumbbell under grid and step refinement.

    python3 scripts/onset_robustness.py
"""
import time

from stefanloss.evolution import StepConfig, initial_state, run
from stefanloss.shapegen import ShapeSpec, make_dumbbell


def onset(nodes: int, dt: float):
    frame = make_dumbbell(ShapeSpec(R=10, delta=0.2, gap=0.0, nodes=nodes)).frame
    cfg = StepConfig(dt=dt, max_t=0.1)
    res = run(initial_state(frame, cfg), cfg)
    ev = res.event("overlapOnset")
    return (ev.t if ev else None), res.status, max(s.ev.overlap_measure for s in res.frames)


def main() -> None:
    print(f"{'N':>6} {'dt':>8} {'t_onset':>10} {'status':>8} {'measure':>8} {'sec':>6}")
    for nodes, dt in [(512, 1e-3), (1024, 1e-3), (512, 5e-4), (512, 2.5e-4)]:
        t0 = time.perf_counter()
        t, status, peak = onset(nodes, dt)
        print(f"{nodes:6d} {dt:8.1e} {t if t is None else f'{t:.5f}':>10} {status:>8} {peak:8.3f} "
              f"{time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
