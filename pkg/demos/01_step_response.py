"""Step response of the three-bus reference network.

Applies a 1 p.u. load step at the passive bus, integrates the closed loop,
and shows the frequencies settling to the common deviation predicted by the
steady-state analysis while the network energy function decays monotonically.

Run:  python demos/01_step_response.py
Writes demos/out/step_response.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gridfreq import analysis, scenario, simulator

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

sc = scenario.load(scenario.shipped_path("ref3bus"))
blocks = sc.build_blocks()

equilibrium = analysis.find_equilibrium(sc.model, blocks)
print(f"predicted steady-state frequency deviation: {equilibrium.omega_star:+.6f} p.u.")
print(f"equilibrium angles (rad): {np.round(equilibrium.eta_star, 5)}")

config = simulator.SimConfig(dt=0.005, t_end=15.0, control_hold=0.0,
                             algebraic_tol=1e-10)
traj = simulator.simulate(sc.model, blocks, config, equilibrium=equilibrium)

final = traj.omega[-1]
print(f"simulated final frequencies:                {np.round(final, 6)}")
print(f"max deviation from prediction:              "
      f"{np.max(np.abs(final - equilibrium.omega_star)):.2e}")

report = analysis.check_monotone(traj)
print(f"energy function: decay {report.total_decay:.4f}, "
      f"largest per-step increase {report.max_increase:.1e} "
      f"({'monotone' if report.passed else 'NOT monotone'})")

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
for i, bus in enumerate(traj.bus_ids):
    ax1.plot(traj.times, traj.omega[:, i], label=f"bus {bus}")
ax1.axhline(equilibrium.omega_star, color="k", ls=":", lw=1,
            label="predicted steady state")
ax1.set_ylabel("frequency deviation (p.u.)")
ax1.legend(loc="lower right")
ax2.semilogy(traj.times[traj.lyapunov > 0], traj.lyapunov[traj.lyapunov > 0])
ax2.set_ylabel("energy function")
ax2.set_xlabel("time (s)")
fig.tight_layout()
fig.savefig(OUT / "step_response.png", dpi=120)
print(f"wrote {OUT / 'step_response.png'}")
