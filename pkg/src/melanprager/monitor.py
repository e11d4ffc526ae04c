"""Per-step energy ledger and the stability diagnostics built on it.

Every row stores discrete norms of one step and the signed slacks of the
two per-step energy inequalities (non-positive means satisfied).  Both
slacks are in energy units, i.e. the inequalities multiplied by ``dt``:

``slack_dissipation``::

    |sigma_n|_S^2 - |sigma*_n|_S^2 + |sigma_n - sigma*_n|_S^2
      + (|alpha_n|^2 - |alpha_{n-1}|^2 + |alpha_n - alpha_{n-1}|^2) / a

``slack_balance``::

    |v_n|^2 - |v_{n-1}|^2 + |sigma*_n|_S^2 - |sigma_{n-1}|_S^2
      + eta dt |E(v_n)|^2 + |v_n - v_{n-1}|^2 + |sigma*_n - sigma_{n-1}|_S^2
      - dt (2 <f_n, v_n> - eta |E(v_n)|^2 + 2 c_S |h_n|^2 + |sigma*_n|_S^2 / 2)

The load term ``(c_K^2/eta)|f_n|_{V*}^2`` of the textbook estimate needs
the Korn constant and a dual norm; it is replaced by the quantity it
bounds, ``2<f_n, v_n> - eta |E(v_n)|^2``, so a non-positive slack here
implies the textbook inequality.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import field_norm_S_sq, field_norm_sq, strain, velocity_inner
from .mesh import Mesh
from .step import State, StepData
from .tensor import MaterialParams

__all__ = [
    "LEDGER_COLUMNS",
    "EnergyLedger",
    "record_step",
    "initial_row",
    "aggregate",
    "telescoped",
    "difference_energy",
]

ENERGY_FIELDS = (
    "v_sq",
    "sigma_star_S",
    "sigma_S",
    "alpha_sq",
    "strain_sq",
    "gap_S",
    "dv_sq",
    "dalpha_sq",
    "xi_sq",
    "gap_H",
    "trial_incr_S",
    "load_work",
    "h_sq",
)
LEDGER_COLUMNS = ("n", "t") + ENERGY_FIELDS + ("slack_balance", "slack_dissipation")

# fields that are norms (non-negative by construction)
_NORMS = tuple(f for f in ENERGY_FIELDS if f != "load_work")


def _row(n, t, **values):
    row = {"n": int(n), "t": float(t)}
    row.update({k: float(values.get(k, 0.0)) for k in ENERGY_FIELDS})
    row["slack_balance"] = float(values.get("slack_balance", 0.0))
    row["slack_dissipation"] = float(values.get("slack_dissipation", 0.0))
    return row


def initial_row(mesh: Mesh, params: MaterialParams, state: State) -> dict:
    """Row ``n = 0`` holding the norms of the initial data; slacks are zero."""
    return _row(
        0,
        state.t,
        v_sq=velocity_inner(mesh, state.v, state.v),
        sigma_star_S=field_norm_S_sq(mesh, params, state.sigma),
        sigma_S=field_norm_S_sq(mesh, params, state.sigma),
        alpha_sq=field_norm_sq(mesh, state.alpha),
        strain_sq=field_norm_sq(mesh, strain(mesh, state.v)),
    )


def record_step(mesh: Mesh, params: MaterialParams, dt: float, n: int,
                prev: State, new: State, data: StepData) -> dict:
    """Ledger row for the step ``prev -> new`` driven by ``data``."""
    p = params
    nS = lambda a: field_norm_S_sq(mesh, p, a)  # noqa: E731
    nH = lambda a: field_norm_sq(mesh, a)  # noqa: E731

    v_sq = velocity_inner(mesh, new.v, new.v)
    v_prev_sq = velocity_inner(mesh, prev.v, prev.v)
    dv = new.v - prev.v
    dv_sq = velocity_inner(mesh, dv, dv)
    sigma_star_S = nS(new.sigma_star)
    sigma_S = nS(new.sigma)
    sigma_prev_S = nS(prev.sigma)
    alpha_sq = nH(new.alpha)
    alpha_prev_sq = nH(prev.alpha)
    dalpha_sq = nH(new.alpha - prev.alpha)
    gap = new.sigma_star - new.sigma
    gap_S = nS(gap)
    strain_sq = nH(strain(mesh, new.v))
    trial_incr_S = nS(new.sigma_star - prev.sigma)
    load_work = float(np.dot(data.load, new.v))
    h_sq = nH(data.h)
    eta, a = p.viscosity, p.hardening

    slack_dissipation = sigma_S - sigma_star_S + gap_S + (alpha_sq - alpha_prev_sq + dalpha_sq) / a
    lhs = (v_sq - v_prev_sq + sigma_star_S - sigma_prev_S + eta * dt * strain_sq + dv_sq + trial_incr_S)
    rhs = dt * (2.0 * load_work - eta * strain_sq + 2.0 * p.c_S * h_sq + 0.5 * sigma_star_S)
    return _row(
        n, new.t,
        v_sq=v_sq, sigma_star_S=sigma_star_S, sigma_S=sigma_S, alpha_sq=alpha_sq,
        strain_sq=strain_sq, gap_S=gap_S, dv_sq=dv_sq, dalpha_sq=dalpha_sq,
        xi_sq=nH(new.xi), gap_H=nH(gap), trial_incr_S=trial_incr_S, load_work=load_work,
        h_sq=h_sq, slack_balance=lhs - rhs, slack_dissipation=slack_dissipation,
    )


@dataclass
class EnergyLedger:
    """Ordered ledger rows; row 0 describes the initial data."""

    params: MaterialParams
    dt: float
    rows: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def scale(self) -> float:
        """``1 + max`` of the energy entries over the run, the tolerance unit."""
        if not self.rows:
            return 1.0
        return 1.0 + max(max(abs(r[k]) for k in ENERGY_FIELDS) for r in self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: (r[k] if k == "n" else repr(r[k])) for k in LEDGER_COLUMNS})

    @classmethod
    def from_csv(cls, path, params: MaterialParams, dt: float) -> "EnergyLedger":
        with open(path, newline="") as fh:
            rows = [
                {k: (int(v) if k == "n" else float(v)) for k, v in r.items()}
                for r in csv.DictReader(fh)
            ]
        return cls(params, dt, rows)


def aggregate(ledger: EnergyLedger, dt: float | None = None) -> dict:
    """Run summary: time maxima, ``dt``-weighted sums and the stress gap.

    ``sigma_gap`` is the discrete ``L2(0,T;H)`` norm of ``sigma* - sigma``,
    i.e. ``sqrt(dt * sum_n |sigma*_n - sigma_n|^2)``.
    """
    dt = ledger.dt if dt is None else dt
    steps = ledger.rows[1:] if ledger.rows and ledger.rows[0]["n"] == 0 else ledger.rows
    out = {"steps": len(steps), "dt": dt, "scale": ledger.scale()}
    for k in ENERGY_FIELDS:
        vals = np.array([r[k] for r in steps]) if steps else np.zeros(0)
        out[f"max_{k}"] = float(np.max(np.abs(vals))) if vals.size else 0.0
        out[f"sum_{k}"] = float(dt * vals.sum()) if vals.size else 0.0
    for k in ("slack_balance", "slack_dissipation"):
        vals = np.array([r[k] for r in steps]) if steps else np.zeros(0)
        out[f"max_{k}"] = float(vals.max()) if vals.size else 0.0
    out["sigma_gap"] = float(np.sqrt(out["sum_gap_H"]))
    return out


def telescoped(ledger: EnergyLedger) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative energy estimate and the matching sum of per-step slacks.

    Adding the balance slack of step ``n`` to the dissipation slack of step
    ``n - 1`` and summing eliminates the intermediate stress norms.  Returns
    ``(display, slack_sum)`` for ``m = 1..N`` where ``display`` is::

        |v_m|^2 - |v_0|^2 + |sigma*_m|_S^2 - |sigma_0|_S^2
          + (|alpha_{m-1}|^2 - |alpha_0|^2) / a + eta dt sum |E(v_n)|^2
          + sum |v_n - v_{n-1}|^2 - dt sum (2<f_n,v_n> - eta|E(v_n)|^2
          + 2 c_S |h_n|^2 + |sigma*_n|_S^2 / 2)

    and ``slack_sum - display`` equals the dropped non-negative terms.
    """
    p, dt = ledger.params, ledger.dt
    rows = ledger.rows
    if not rows or rows[0]["n"] != 0:
        raise ValueError("ledger must start with the initial-data row")
    col = {k: np.array([r[k] for r in rows]) for k in LEDGER_COLUMNS}
    eta, a = p.viscosity, p.hardening
    n = np.arange(1, len(rows))
    alpha_prev = col["alpha_sq"][n - 1]
    display = (
        col["v_sq"][n] - col["v_sq"][0]
        + col["sigma_star_S"][n] - col["sigma_S"][0]
        + (alpha_prev - col["alpha_sq"][0]) / a
        + np.cumsum(eta * dt * col["strain_sq"][n] + col["dv_sq"][n])
        - dt * np.cumsum(2 * col["load_work"][n] - eta * col["strain_sq"][n]
                         + 2 * p.c_S * col["h_sq"][n] + 0.5 * col["sigma_star_S"][n])
    )
    slack_sum = np.cumsum(col["slack_balance"][n] + col["slack_dissipation"][n - 1])
    return display, slack_sum


def difference_energy(run_a, run_b) -> np.ndarray:
    """``G_n = |e_v|^2/2 + |e_sigma|_S^2/2 + |e_alpha|^2/(2a)`` per time level.

    ``run_a`` and ``run_b`` are run results with stored histories on the
    same mesh, material and time step.
    """
    if not run_a.mesh.same_topology(run_b.mesh):
        raise ValueError("runs use different meshes")
    if run_a.params != run_b.params:
        raise ValueError("runs use different material parameters")
    if run_a.dt != run_b.dt or len(run_a.times) != len(run_b.times):
        raise ValueError("runs use different time discretizations")
    if run_a.v is None or run_b.v is None:
        raise ValueError("runs were made without stored histories")
    mesh, p = run_a.mesh, run_a.params
    out = np.empty(len(run_a.times))
    for k in range(len(out)):
        ev = run_a.v[k] - run_b.v[k]
        out[k] = (
            0.5 * velocity_inner(mesh, ev, ev)
            + 0.5 * field_norm_S_sq(mesh, p, run_a.sigma[k] - run_b.sigma[k])
            + field_norm_sq(mesh, run_a.alpha[k] - run_b.alpha[k]) / (2.0 * p.hardening)
        )
    return out
