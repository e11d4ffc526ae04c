"""Von Mises projection and the kinematic-hardening return map.

All functions act pointwise and broadcast over leading batch axes, so the
same call handles a single tensor or a whole cellwise field.  A yield
bound of ``numpy.inf`` disables the constraint (pure viscoelastic limit).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import MaterialParams, apply_S, deviator, inner, norm

__all__ = ["ReturnMapResult", "project", "plastic_excess", "return_map", "check_vi"]


def _check_bound(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if np.any(np.isnan(R)) or np.any(R < 0):
        raise ValueError("yield bound must be non-negative")
    return R


def _radial_ratio(R, dev_norm):
    outside = dev_norm > R
    shape = np.broadcast(R, dev_norm).shape
    ratio = np.divide(R, dev_norm, out=np.ones(shape), where=outside)
    return outside, ratio


def project(R, A) -> np.ndarray:
    """Project ``A`` onto ``{|B^D| <= R}`` keeping its trace.

    Returns ``A`` when ``|A^D| <= R`` and ``(tr A/d) I + R A^D/|A^D|``
    otherwise.
    """
    R = _check_bound(R)
    A = np.asarray(A, dtype=float)
    dev = deviator(A)
    outside, ratio = _radial_ratio(R, norm(dev))
    projected = (A - dev) + ratio[..., None] * dev
    return np.where(outside[..., None], projected, A)


def plastic_excess(R, X):
    """``X - project(R, X)`` computed on the deviator, plus the active mask."""
    R = _check_bound(R)
    dev = deviator(X)
    outside, ratio = _radial_ratio(R, norm(dev))
    excess = np.where(outside[..., None], (1.0 - ratio)[..., None] * dev, 0.0)
    return excess, outside


@dataclass(frozen=True)
class ReturnMapResult:
    sigma: np.ndarray
    alpha: np.ndarray
    xi: np.ndarray
    plastic: np.ndarray


def return_map(p: MaterialParams, dt: float, sigma_star, alpha_old, R) -> ReturnMapResult:
    """Solve the coupled backstress/projection equations in closed form.

    With ``X = sigma_star - alpha_old`` and ``b = a(1+nu)/E``::

        alpha = alpha_old + b/(b+1) (X - P_R(X))
        sigma = sigma_star - 1/(b+1) (X - P_R(X))
        xi    = S(sigma_star - sigma) / dt

    The stress correction is written with ``1/(b+1)`` rather than ``1/b`` so
    that vanishing hardening stays well conditioned.
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    sigma_star = np.asarray(sigma_star, dtype=float)
    alpha_old = np.asarray(alpha_old, dtype=float)
    b = p.b
    excess, plastic = plastic_excess(R, sigma_star - alpha_old)
    alpha = alpha_old + (b / (b + 1.0)) * excess
    sigma = sigma_star - excess / (b + 1.0)
    xi = apply_S(p, sigma_star - sigma) / dt
    return ReturnMapResult(sigma=sigma, alpha=alpha, xi=xi, plastic=plastic)


def check_vi(result: ReturnMapResult, samples, R, weights=None, feas_tol=1e-12) -> float:
    """Largest value of ``(xi, tau - (sigma - alpha))`` over admissible ``tau``.

    ``samples`` is an iterable of tensors (or cellwise fields) with
    ``|tau^D| <= R``; an inadmissible sample raises ``ValueError``.  With
    ``weights`` (cell areas) the pairing is the weighted field product,
    otherwise values are summed over batch axes.  A correct return map
    gives a non-positive result up to round-off.
    """
    R = _check_bound(R)
    shifted = result.sigma - result.alpha
    worst = -np.inf
    for k, tau in enumerate(samples):
        tau = np.asarray(tau, dtype=float)
        dev_norm = norm(deviator(tau))
        bad = dev_norm > R + feas_tol * (1.0 + np.where(np.isfinite(R), R, 0.0))
        if np.any(bad):
            excess = float(np.max(np.where(bad, dev_norm - R, 0.0)))
            raise ValueError(f"sample {k} is not admissible: |tau^D| exceeds the bound by {excess:.3e}")
        pointwise = inner(result.xi, tau - shifted)
        value = np.sum(pointwise * weights) if weights is not None else np.sum(pointwise)
        worst = max(worst, float(value))
    return worst
