"""Droop gain limits for governor/turbine generation under local damping.

The two-lag cascade is not passive on its own: its frequency response dips
below zero by up to 1/8 of the droop gain.  Local damping D absorbs the dip,
and the admissible gain-to-damping ratio is 8 at equal lags, growing without
bound as the lag ratio collapses toward a first-order response.

Run:  python demos/03_governor_margins.py
Writes demos/out/governor_margins.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gridfreq import passivity

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

tau = 0.3
closed = passivity.tg_min_real(tau, tau)
print(f"equal lags {tau}s: min Re = {closed.value:.6f} at {closed.frequency:.3f} rad/s")
print(f"  (exactly -1/8 at sqrt(3)/tau = {np.sqrt(3)/tau:.3f})")

print("\ngain ratio bound against the lag ratio:")
for a in (0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0):
    print(f"  ratio {a:>6}: max gain/damping = {passivity.max_gain_ratio(a):8.2f}")

# margin scan: gain below vs above the bound, with unit damping
damping = 1.0
for gain in (7.5 * damping, 8.5 * damping):
    tf = passivity.turbine_governor_tf(tau, tau, gain=gain, damping=damping)
    report = passivity.isp_margin(tf)
    status = "passive" if report.passed else "margin lost"
    print(f"gain {gain:.1f}: worst Re {report.margin:+.4f} "
          f"at {report.worst_frequency:.2f} rad/s -> {status}")

ratios = np.logspace(-2, 2, 200)
bounds = [passivity.max_gain_ratio(float(a)) for a in ratios]

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.loglog(ratios, bounds)
ax1.axhline(8.0, color="k", ls=":", lw=1)
ax1.set_xlabel("lag ratio")
ax1.set_ylabel("max gain / damping")
ax1.set_title("admissible droop gain")

w = np.logspace(-1, 2, 400)
for gain in (7.5, 8.5):
    tf = passivity.turbine_governor_tf(tau, tau, gain=gain, damping=damping)
    resp = tf.response(w)
    ax2.plot(resp.real, resp.imag, label=f"gain {gain}")
ax2.axvline(0.0, color="k", ls=":", lw=1)
ax2.set_xlabel("Re")
ax2.set_ylabel("Im")
ax2.set_title("frequency response, unit damping")
ax2.legend()
fig.tight_layout()
fig.savefig(OUT / "governor_margins.png", dpi=120)
print(f"\nwrote {OUT / 'governor_margins.png'}")
