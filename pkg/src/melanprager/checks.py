"""Self-checks run by ``melanprager check``.

Each check returns a :class:`CheckResult` with the worst observed value
and the tolerance it was held to.  The randomized checks take a numpy
``Generator`` so that a seed reproduces them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import project, return_map
from .scenario import builtin_scenarios, resolve_scenario, run, scenario_material_point
from .step import CONSTRAINT_TOL
from .tensor import MaterialParams, apply_S, deviator, inner, ncomp, norm

__all__ = ["CheckResult", "projection_laws", "return_map_agreement", "scenario_invariants", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)


def _random_tensors(rng, n, dim, scale=1.0):
    m = ncomp(dim)
    a = rng.normal(scale=scale, size=(n, m))
    # a share of purely hydrostatic and purely deviatoric samples
    k = n // 10
    a[:k] = a[:k, :1] * np.eye(dim)[np.triu_indices(dim)]
    a[k:2 * k] = deviator(a[k:2 * k])
    return a


def _random_bounds(rng, n):
    R = rng.exponential(1.0, size=n)
    R[rng.random(n) < 0.1] = 0.0
    return R


def projection_laws(rng, n=100_000, dims=(2, 3), tol=1e-12) -> list[CheckResult]:
    """Lipschitz continuity in the bound, the obtuse-angle law and non-expansiveness."""
    out = []
    for d in dims:
        A, B = _random_tensors(rng, n, d), _random_tensors(rng, n, d)
        R1, R2 = _random_bounds(rng, n), _random_bounds(rng, n)
        lip_R = norm(project(R1, A) - project(R2, A)) - np.abs(R1 - R2)
        # B inside the admissible set: shrink its deviator when needed
        dev_b = norm(deviator(B))
        shrink = np.where(dev_b > R1, R1 / np.where(dev_b > 0, dev_b, 1.0) * rng.random(n), 1.0)
        B_in = B - (1.0 - shrink)[:, None] * deviator(B)
        PA = project(R1, A)
        obtuse = inner(PA - A, PA - B_in)
        nonexp = norm(PA - project(R1, B)) - norm(A - B)
        out += [
            CheckResult(f"projection Lipschitz in R (d={d})", float(lip_R.max()), tol),
            CheckResult(f"projection obtuse angle (d={d})", float(obtuse.max()), tol),
            CheckResult(f"projection non-expansive (d={d})", float(nonexp.max()), tol),
        ]
    return out


def _fixed_point_return(p: MaterialParams, sigma_star, alpha_old, R, tol=1e-15, max_iter=2000):
    """Return map from a relaxed fixed-point iteration on ``gamma = sigma* - sigma_n``.

    Solves ``gamma = (I - P_R)(sigma* - alpha_old - a S gamma)``, the
    backstress law ``alpha_n = alpha_old + a S gamma`` substituted into the
    projection condition.  Iterating on the stress correction keeps the
    result well conditioned for both tiny and huge hardening.
    """
    Y = sigma_star - alpha_old
    R = np.broadcast_to(np.asarray(R, dtype=float), Y.shape[:1])
    omega = 0.7 / (1.0 + p.b)
    gamma = np.zeros_like(Y)
    for _ in range(max_iter):
        Z = Y - p.hardening * apply_S(p, gamma)
        new = (1.0 - omega) * gamma + omega * (Z - project(R, Z))
        done = np.max(norm(new - gamma)) <= tol * (1.0 + np.max(norm(Y)))
        gamma = new
        if done:
            break
    return sigma_star - gamma, alpha_old + p.hardening * apply_S(p, gamma)


def return_map_agreement(rng, n=10_000, tol=1e-10) -> list[CheckResult]:
    """Closed-form return map against the fixed-point oracle, d = 2 and 3."""
    out = []
    for d in (2, 3):
        for b_target in (1e-6, 1.0, 1e3):
            E, nu = 1.0, 0.25
            p = MaterialParams(E, nu, 1.0, b_target * E / (1.0 + nu), d)
            k = n // 6
            sigma_star = _random_tensors(rng, k, d, 2.0)
            alpha = _random_tensors(rng, k, d, 0.5)
            R = _random_bounds(rng, k)
            res = return_map(p, 0.01, sigma_star, alpha, R)
            s_fp, a_fp = _fixed_point_return(p, sigma_star, alpha, R)
            err = max(np.max(norm(res.sigma - s_fp)), np.max(norm(res.alpha - a_fp)))
            out.append(CheckResult(f"return map vs fixed point (d={d}, b={b_target:g})", float(err), tol))
    return out


def scenario_invariants(names=None) -> list[CheckResult]:
    """Constraint, trace, energy slacks and the 0D twin on shipped scenarios."""
    out = []
    for name in names if names is not None else builtin_scenarios():
        sc = resolve_scenario(name)
        res = run(sc)
        summary = res.summary()
        scale = summary["scale"]
        out += [
            CheckResult(f"{name}: yield constraint", max(res.max_constraint_excess, 0.0), CONSTRAINT_TOL),
            CheckResult(f"{name}: trace conservation", res.max_trace_drift, 1e-13),
            CheckResult(f"{name}: dissipation slack", summary["max_slack_dissipation"] / scale, 1e-10),
            CheckResult(f"{name}: balance slack", summary["max_slack_balance"] / scale, 1e-9),
        ]
        if sc.data["h"] and sc.mesh.get("gamma1") == "all" and len(res.mesh.dirichlet_vertices()) == res.mesh.n_vertices:
            mp = scenario_material_point(sc)
            err = max(np.abs(res.sigma - mp.sigma[:, None]).max(), np.abs(res.alpha - mp.alpha[:, None]).max())
            out.append(CheckResult(f"{name}: material-point twin", float(err), 1e-10))
    return out


def run_all(seed=0, n_projection=100_000, n_return=10_000, names=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return projection_laws(rng, n_projection) + return_map_agreement(rng, n_return) + scenario_invariants(names)

