"""Sweep the per-round transmission budget and the latency ceiling.

More allowed uploads per round (larger b) buy insurance against
interruptions but bill more megabytes; a tighter latency ceiling screens
out slow users before the round starts. Prints both trade-off tables and
renders the budget sweep to demos/out/budget_sweep.svg.
"""

import dataclasses
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from scheme_comparison import BASE

from uavfl.sim import average_comm_overhead, run_simulation
from uavfl.svgchart import emit_svg_chart

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
SEEDS = (1, 2, 3)


def run(config):
    accs, mbs, selected = [], [], []
    for seed in SEEDS:
        metrics, _ = run_simulation(dataclasses.replace(config, seed=seed))
        accs.append(metrics[-1].test_accuracy)
        mbs.append(average_comm_overhead(metrics))
        selected.append(np.mean([m.num_selected for m in metrics]))
    return float(np.mean(accs)), float(np.mean(mbs)), float(np.mean(selected))


def main():
    print("transmission budget sweep (keep-intermediate scheme):")
    print(f"{'b':>3} {'mean final acc':>15} {'mean MB/round':>14}")
    bs, accs, mbs = [1, 2, 3], [], []
    for b in bs:
        acc, mb, _ = run(dataclasses.replace(BASE, b=b))
        accs.append(acc)
        mbs.append(mb)
        print(f"{b:>3} {acc:>15.4f} {mb:>14.6f}")
    print(f"b=2 costs {mbs[1] / mbs[0]:.2f}x the b=1 traffic")

    print("\nlatency ceiling sweep (b=2):")
    print(f"{'tau [s]':>8} {'mean selected':>14} {'mean MB/round':>14}")
    for tau in (0.32, 0.335, 10.0):
        _, mb, sel = run(dataclasses.replace(BASE, tau_max_s=tau))
        print(f"{tau:>8} {sel:>14.2f} {mb:>14.6f}")

    os.makedirs(OUT_DIR, exist_ok=True)
    path = os.path.join(OUT_DIR, "budget_sweep.svg")
    emit_svg_chart(
        [("final accuracy", [float(b) for b in bs], accs),
         ("MB per round x10", [float(b) for b in bs], [m * 10 for m in mbs])],
        "transmission budget b", "value", path,
        title="Budget sweep: accuracy vs communication cost",
    )
    print(f"\nwrote {path}")


if __name__ == "__main__":
    main()
