"""
Kinematic hardening at a material point
=======================================

Forward shear past yield, then reverse.  The yield set travels with the
backstress, so on reversal the stress has to drop by the full diameter 2g
of the elastic range before plastic flow resumes.
"""
import numpy as np

from melanprager import norm, resolve_scenario
from melanprager.scenario import scenario_material_point, yield_events

sc = resolve_scenario("bauschinger")
g = sc.data["g"][0]["amplitude"]
res = scenario_material_point(sc)
ev = yield_events(res)

print(f"yield bound g = {g}")
print(f"first yield at |s^D| = {float(norm(ev.forward_yield)):.5f} (step {np.argmax(res.plastic)})")
print(f"load reversal at step {ev.reversal_step}, reverse yield at step {ev.reverse_yield_step}")
print(f"stress drop before reverse yield = {ev.reverse_gap:.5f}  (2g = {2 * g})")

tau, gamma = res.sigma[:, 1], res.strain[:, 1]
area = abs(np.sum(0.5 * (tau[1:] + tau[:-1]) * np.diff(gamma)))
print(f"area of the shear stress-strain loop = {area:.3e}")

res.to_csv("bauschinger.csv")
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(gamma, tau, lw=1.2)
    ax.set_xlabel("shear strain")
    ax.set_ylabel("shear stress")
    fig.tight_layout()
    fig.savefig("bauschinger.png", dpi=120)
    print("wrote bauschinger.png")
except ImportError:
    pass
