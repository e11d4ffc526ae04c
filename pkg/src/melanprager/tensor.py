"""Symmetric tensor algebra and the isotropic compliance/stiffness pair.

Symmetric d x d tensors are stored packed: the last array axis holds the
d(d+1)/2 upper-triangle entries in ``numpy.triu_indices`` order, i.e.
``(xx, xy, yy)`` for d=2 and ``(xx, xy, xz, yy, yz, zz)`` for d=3.  Any
leading axes are batch axes, so a cellwise field of tensors is simply an
array of shape ``(ncells, m)``.  The Frobenius weighting of off-diagonal
entries is applied only inside :func:`inner` and the norms, which keeps
``|A|`` equal to the Frobenius norm of the full matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MaterialParams",
    "ncomp",
    "dim_of",
    "pack",
    "unpack",
    "identity",
    "trace",
    "deviator",
    "inner",
    "norm",
    "apply_S",
    "apply_C",
    "norm_S_sq",
    "norm_C_sq",
    "matrix_S",
    "matrix_C",
    "frobenius_weights",
]

_DIM_OF_NCOMP = {3: 2, 6: 3}


def ncomp(dim: int) -> int:
    """Number of packed entries of a symmetric ``dim`` x ``dim`` tensor."""
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    return dim * (dim + 1) // 2


def dim_of(a) -> int:
    """Spatial dimension implied by the packed length of ``a``."""
    m = np.shape(a)[-1]
    try:
        return _DIM_OF_NCOMP[m]
    except KeyError:
        raise ValueError(f"packed symmetric tensor must have 3 or 6 entries, got {m}") from None


@lru_cache(maxsize=None)
def _layout(dim: int):
    rows, cols = np.triu_indices(dim)
    diag = rows == cols
    weights = np.where(diag, 1.0, 2.0)
    for arr in (rows, cols, diag, weights):
        arr.setflags(write=False)
    return rows, cols, diag, weights


def pack(mat) -> np.ndarray:
    """Pack full symmetric matrices ``(..., d, d)`` into ``(..., m)``.

    The upper triangle is read; symmetry of the input is not checked.
    """
    mat = np.asarray(mat, dtype=float)
    dim = mat.shape[-1]
    if mat.shape[-2] != dim:
        raise ValueError("expected square matrices")
    rows, cols, _, _ = _layout(dim)
    return mat[..., rows, cols].copy()


def unpack(a) -> np.ndarray:
    """Expand packed tensors ``(..., m)`` into full matrices ``(..., d, d)``."""
    a = np.asarray(a, dtype=float)
    dim = dim_of(a)
    rows, cols, _, _ = _layout(dim)
    out = np.empty(a.shape[:-1] + (dim, dim))
    out[..., rows, cols] = a
    out[..., cols, rows] = a
    return out


def identity(dim: int) -> np.ndarray:
    """Packed identity tensor."""
    _, _, diag, _ = _layout(dim)
    return diag.astype(float)


def trace(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    _, _, diag, _ = _layout(dim_of(a))
    return a[..., diag].sum(axis=-1)


def deviator(a) -> np.ndarray:
    """Trace-free part ``A - (tr A / d) I``."""
    a = np.asarray(a, dtype=float)
    dim = dim_of(a)
    _, _, diag, _ = _layout(dim)
    out = a.copy()
    out[..., diag] -= (trace(a) / dim)[..., None]
    return out


def inner(a, b) -> np.ndarray:
    """Frobenius product ``A : B`` of packed tensors (batched)."""
    a = np.asarray(a, dtype=float)
    _, _, _, w = _layout(dim_of(a))
    return np.sum(w * a * np.asarray(b, dtype=float), axis=-1)


def norm(a) -> np.ndarray:
    """Frobenius norm ``|A|``."""
    return np.sqrt(inner(a, a))


@dataclass(frozen=True)
class MaterialParams:
    """Homogeneous isotropic material with Kelvin-Voigt viscosity.

    The density is fixed to one.  ``hardening`` is the Melan-Prager modulus
    relating backstress rate to plastic strain rate.
    """

    youngs: float
    poisson: float
    viscosity: float
    hardening: float
    dim: int = 2

    def __post_init__(self):
        ncomp(self.dim)
        if not self.youngs > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.youngs}")
        if not -1.0 < self.poisson < 1.0 / (self.dim - 1):
            raise ValueError(
                f"Poisson ratio must lie in (-1, {1.0 / (self.dim - 1):g}) for d={self.dim}, "
                f"got {self.poisson}"
            )
        if not self.viscosity > 0:
            raise ValueError(f"viscosity must be positive, got {self.viscosity}")
        if not self.hardening > 0:
            raise ValueError(f"hardening modulus must be positive, got {self.hardening}")

    @property
    def b(self) -> float:
        """Deviatoric hardening ratio ``a (1 + nu) / E``."""
        return self.hardening * (1.0 + self.poisson) / self.youngs

    @property
    def c_S(self) -> float:
        """Two-sided equivalence constant between ``|.|_S``, ``|.|_C`` and ``|.|``."""
        E, nu, d = self.youngs, self.poisson, self.dim
        bulk = 1.0 - (d - 1) * nu
        return max((1 + nu) / E, bulk / E, E / (1 + nu), E / bulk)


def apply_S(p: MaterialParams, tau) -> np.ndarray:
    """Compliance ``S tau = ((1+nu)/E) tau - (nu/E)(tr tau) I``."""
    tau = np.asarray(tau, dtype=float)
    _, _, diag, _ = _layout(p.dim)
    out = (1.0 + p.poisson) / p.youngs * tau
    out[..., diag] -= (p.poisson / p.youngs * trace(tau))[..., None]
    return out


def apply_C(p: MaterialParams, eps) -> np.ndarray:
    """Stiffness, the inverse of :func:`apply_S`."""
    eps = np.asarray(eps, dtype=float)
    _, _, diag, _ = _layout(p.dim)
    nu = p.poisson
    out = eps.copy()
    out[..., diag] += (nu / (1.0 - (p.dim - 1) * nu) * trace(eps))[..., None]
    return p.youngs / (1.0 + nu) * out


def norm_S_sq(p: MaterialParams, tau) -> np.ndarray:
    """Pointwise ``(S tau) : tau``."""
    return inner(apply_S(p, tau), tau)


def norm_C_sq(p: MaterialParams, eps) -> np.ndarray:
    """Pointwise ``(C eps) : eps``."""
    return inner(apply_C(p, eps), eps)


def matrix_S(p: MaterialParams) -> np.ndarray:
    """Matrix of ``S`` acting on packed vectors (``S[:, j] = S e_j``)."""
    return apply_S(p, np.eye(ncomp(p.dim))).T


def matrix_C(p: MaterialParams) -> np.ndarray:
    """Matrix of ``C`` acting on packed vectors."""
    return apply_C(p, np.eye(ncomp(p.dim))).T


def frobenius_weights(dim: int) -> np.ndarray:
    """Per-entry weights turning packed dot products into ``A : B``."""
    return _layout(dim)[3]
