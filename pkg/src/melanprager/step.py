"""One time step of the projection scheme and the linear solver behind it.

A step first solves the linear viscoelastic velocity system to obtain a
trial stress, then applies the closed-form return map cellwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constitutive import return_map
from .fem import DofMap, assemble_rhs, assemble_step_matrix, strain
from .mesh import Mesh
from .tensor import MaterialParams, apply_C, deviator, norm, trace

__all__ = [
    "ConvergenceError",
    "ConstraintViolation",
    "StepData",
    "State",
    "cg_solve",
    "Stepper",
    "constraint_excess",
    "trace_drift",
]

CONSTRAINT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Conjugate gradients did not reach the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConstraintViolation(RuntimeError):
    """A cell left the translated yield set after the return map."""

    def __init__(self, message, step=None, cell=None, excess=None):
        super().__init__(message)
        self.step = step
        self.cell = cell
        self.excess = excess


def cg_solve(A, rhs, tol=1e-10, max_iter=None, x0=None, precond=None, full_output=False):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||rhs - A x|| <= tol * ||rhs||``.  ``precond`` is the
    inverse diagonal; it is computed from ``A`` when omitted.  Raises
    :class:`ConvergenceError` after ``max_iter`` iterations (default
    ``10 * n``).  With ``full_output`` returns ``(x, iterations, residual)``.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(10 * n, 10)
    b_norm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if n == 0 or b_norm == 0.0:
        x = np.zeros(n)
        return (x, 0, 0.0) if full_output else x
    if precond is None:
        precond = 1.0 / A.diagonal()
    target = tol * b_norm

    r = b - A @ x
    res = np.linalg.norm(r)
    it = 0
    while res > target:
        z = precond * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            Ap = A @ p
            step = rz / (p @ Ap)
            x += step * p
            r -= step * Ap
            it += 1
            res = np.linalg.norm(r)
            if res <= target:
                break
            z = precond * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        # guard against drift of the recursive residual
        r = b - A @ x
        res = np.linalg.norm(r)
        if it >= max_iter and res > target:
            raise ConvergenceError(
                f"CG did not converge in {it} iterations (relative residual {res / b_norm:.3e})",
                residual=res / b_norm,
                iterations=it,
            )
    return (x, it, res / b_norm) if full_output else x


@dataclass(frozen=True)
class StepData:
    """Slab data for one step: load vector, averaged ``h`` and ``g(t_n)``."""

    t0: float
    t1: float
    load: np.ndarray
    h: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class State:
    """Discrete solution at one time level.

    ``v`` is the flat nodal velocity; ``sigma``, ``sigma_star``, ``alpha``
    and ``xi`` are cellwise packed tensors; ``g`` is the cellwise yield
    bound the state was projected with.
    """

    t: float
    v: np.ndarray
    sigma: np.ndarray
    sigma_star: np.ndarray
    alpha: np.ndarray
    xi: np.ndarray
    g: np.ndarray
    plastic: np.ndarray

    @classmethod
    def initial(cls, v0, sigma0, alpha0, g0, t=0.0):
        sigma0 = np.asarray(sigma0, dtype=float)
        return cls(
            t=float(t),
            v=np.asarray(v0, dtype=float).reshape(-1),
            sigma=sigma0,
            sigma_star=sigma0.copy(),
            alpha=np.asarray(alpha0, dtype=float),
            xi=np.zeros_like(sigma0),
            g=np.broadcast_to(np.asarray(g0, dtype=float), sigma0.shape[:1]).copy(),
            plastic=np.zeros(sigma0.shape[0], dtype=bool),
        )


def constraint_excess(sigma, alpha, g) -> np.ndarray:
    """Cellwise ``|(sigma - alpha)^D| - g`` scaled by ``1 + g``."""
    g = np.asarray(g, dtype=float)
    gap = norm(deviator(np.asarray(sigma) - np.asarray(alpha)))
    with np.errstate(invalid="ignore"):
        return np.where(np.isinf(g), -np.inf, (gap - g) / (1.0 + g))


class Stepper:
    """Advances states with a fixed time step.

    The step matrix ``M/dt + eta K + dt K_C`` has constant coefficients, so
    it is assembled once together with its Jacobi preconditioner.
    """

    def __init__(self, mesh: Mesh, params: MaterialParams, dt: float, dofmap: DofMap | None = None,
                 cg_tol: float = 1e-10, cg_max_iter: int | None = None):
        if not dt > 0:
            raise ValueError("time step must be positive")
        if dt > 1:
            warnings.warn(f"time step {dt} exceeds 1; the stability estimates are stated for dt <= 1",
                          stacklevel=2)
        if params.dim != mesh.dim:
            raise ValueError("material dimension does not match the mesh")
        self.mesh = mesh
        self.params = params
        self.dt = float(dt)
        self.dofmap = dofmap if dofmap is not None else DofMap.from_mesh(mesh)
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.matrix = assemble_step_matrix(mesh, self.dofmap, params, self.dt)
        diag = self.matrix.diagonal()
        self.precond = 1.0 / diag if diag.size else diag
        self.last_iterations = 0

    def trial_solve(self, state: State, data: StepData):
        """Velocity ``v_n`` and trial stress ``sigma*_n`` for one step."""
        dm, p, dt = self.dofmap, self.params, self.dt
        rhs = assemble_rhs(self.mesh, dm, p, dt, state.v, state.sigma, data.load, data.h)
        vf, its, _ = cg_solve(self.matrix, rhs, tol=self.cg_tol, max_iter=self.cg_max_iter,
                              x0=state.v[dm.free], precond=self.precond, full_output=True)
        self.last_iterations = its
        v = dm.extend(vf)
        sigma_star = state.sigma + dt * apply_C(p, strain(self.mesh, v) + data.h)
        return v, sigma_star

    def advance(self, state: State, data: StepData, step: int | None = None) -> State:
        """Trial solve followed by the cellwise return map."""
        v, sigma_star = self.trial_solve(state, data)
        rm = return_map(self.params, self.dt, sigma_star, state.alpha, data.g)
        excess = constraint_excess(rm.sigma, rm.alpha, data.g)
        if np.any(excess > CONSTRAINT_TOL):
            cell = int(np.argmax(excess))
            raise ConstraintViolation(
                f"step {step}: cell {cell} violates the yield constraint by {excess[cell]:.3e}",
                step=step, cell=cell, excess=float(excess[cell]),
            )
        return State(t=data.t1, v=v, sigma=rm.sigma, sigma_star=sigma_star, alpha=rm.alpha,
                     xi=rm.xi, g=np.broadcast_to(data.g, rm.plastic.shape).copy(), plastic=rm.plastic)


def trace_drift(prev: State, new: State) -> float:
    """Largest cellwise relative trace change across the return map.

    Compares ``tr sigma_n`` with ``tr sigma*_n`` and ``tr alpha_n`` with
    ``tr alpha_{n-1}``, relative to ``|sigma*_n| + |alpha_{n-1}|``.
    """
    scale = norm(new.sigma_star) + norm(prev.alpha)
    drift = np.maximum(np.abs(trace(new.sigma) - trace(new.sigma_star)),
                       np.abs(trace(new.alpha) - trace(prev.alpha)))
    rel = np.divide(drift, scale, out=np.zeros_like(drift), where=scale > 0)
    return float(rel.max()) if rel.size else 0.0

