"""
Convergence under time-step refinement
======================================

Successive halvings of the time step on the shear-yield problem and on
its viscoelastic twin (no yield bound).  Differences between consecutive
levels shrink at first order in both; the stress gap |s* - s| shrinks at
first order as well for this smooth loading.
"""
import numpy as np

from melanprager import compare_runs, converge, resolve_scenario, run

table = converge(resolve_scenario("shear-yield"), 4)
print("level        dt      diff_v  diff_sigma  diff_alpha   sigma_gap")
for r in table.rows:
    print(f"{r['level']:5d} {r['dt']:9.2e} {r['diff_v']:11.3e} {r['diff_sigma']:11.3e} "
          f"{r['diff_alpha']:11.3e} {r['sigma_gap']:11.3e}")
gaps = table.column("sigma_gap")
print("stress gap ratios per halving:", np.round(gaps[:-1] / gaps[1:], 3))

sc = resolve_scenario("viscoelastic")
ref = run(sc.with_steps(sc.N * 128))
err = np.array([compare_runs(run(sc.with_steps(sc.N * 2**k)), ref)["diff_v"] for k in range(4)])
print("viscoelastic velocity errors:", err)
print("observed orders:", np.round(np.log2(err[:-1] / err[1:]), 3))
