#!/usr/bin/env python3
"""Simulate the benchmark regime-switching state-space model.

Eight scalar candidate models share the state: each step first draws which
model is active (a Markov chain or a Polya urn over the model index), then
propagates the state and emits a noisy observation of sqrt(|state|). This
script simulates a few trajectories under both switching laws and prints
what the regime process did; with matplotlib available it also saves a
figure.
"""

import numpy as np

from rsdbpf import paper_suite, simulate

for kind in ("markov", "polya"):
    suite = paper_suite(kind)
    print(f"\n=== {kind} switching ===")
    if kind == "markov":
        p = suite.dynamics.transition
        print(f"transition matrix: stay {p[0, 0]}, advance {p[0, 1]}, "
              f"other {p[0, 2]:.6f} (rows sum to {p.sum(axis=1)[0]:.12f})")
    else:
        print(f"urn pseudo-counts beta = {suite.dynamics.beta}")

    for seed in (0, 1):
        traj = simulate(suite, 2024, traj_id=seed)
        regimes = traj.regimes
        switches = int(np.sum(regimes[1:] != regimes[:-1]))
        dwell = len(regimes) / (switches + 1)
        occupancy = np.bincount(regimes, minlength=8)
        print(f"trajectory {seed}: {switches} regime switches, "
              f"mean dwell {dwell:.1f} steps, occupancy {occupancy.tolist()}")
        print(f"  state range [{traj.states.min():+.2f}, {traj.states.max():+.2f}], "
              f"obs range [{traj.observations.min():+.2f}, {traj.observations.max():+.2f}]")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    for ax, kind in zip(axes, ("markov", "polya")):
        traj = simulate(paper_suite(kind), 2024, traj_id=0)
        t = np.arange(1, len(traj.observations) + 1)
        ax.plot(np.arange(len(traj.states)), traj.states, label="state")
        ax.plot(t, traj.observations, ".", alpha=0.6, label="observation")
        ax.step(np.arange(len(traj.regimes)), traj.regimes - 8, where="post",
                label="regime index (shifted)")
        ax.set_title(f"{kind} switching")
        ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig("demo_simulate.png", dpi=120)
    print("\nsaved demo_simulate.png")
except ImportError:
    print("\nmatplotlib not available; skipping the figure")
