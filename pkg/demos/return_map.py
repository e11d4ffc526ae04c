"""
The return map on a single stress point
=======================================

A trial stress outside the translated yield set is pulled back along its
deviator.  Part of the excess moves the stress, the rest moves the
backstress, in the ratio 1 : b with b = a (1 + nu) / E.
"""
import numpy as np

from melanprager import MaterialParams, deviator, norm, pack, return_map, unpack

p = MaterialParams(youngs=1.0, poisson=0.0, viscosity=0.01, hardening=1.0)
print("hardening ratio b =", p.b)

# pure shear of deviatoric size 3 against a yield radius of 1
s = 3.0 / np.sqrt(2.0)
sigma_star = pack(np.array([[0.0, s], [s, 0.0]]))
res = return_map(p, dt=0.1, sigma_star=sigma_star, alpha_old=np.zeros(3), R=1.0)

print("trial stress\n", unpack(sigma_star))
print("stress after return\n", unpack(res.sigma))
print("backstress\n", unpack(res.alpha))
print("|(sigma - alpha)^D| =", float(norm(deviator(res.sigma - res.alpha))))

# The excess of 2 is split evenly because b = 1; with stiffer hardening the
# backstress takes the larger share.
for a in (0.1, 1.0, 10.0):
    q = MaterialParams(1.0, 0.0, 0.01, a)
    r = return_map(q, 0.1, sigma_star, np.zeros(3), 1.0)
    print(f"a = {a:5.1f}: |sigma^D| = {float(norm(deviator(r.sigma))):.4f}, |alpha| = {float(norm(r.alpha)):.4f}")
