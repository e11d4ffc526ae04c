"""P1 vector finite elements on simplices.

Velocities are continuous piecewise-linear, stored as flat vectors with
interleaved components (dof ``d * vertex + component``).  Stresses,
backstresses and strains are cellwise constant packed tensors, which is
exact because the symmetric gradient of a P1 field is constant per cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import TRACTION, Mesh
from .tensor import MaterialParams, apply_C, frobenius_weights, inner, matrix_C, ncomp, norm_S_sq

__all__ = [
    "DofMap",
    "strain",
    "strain_operator",
    "assemble_mass",
    "assemble_viscous",
    "assemble_step_matrix",
    "load_vector",
    "stress_divergence",
    "assemble_rhs",
    "time_average",
    "velocity_inner",
    "field_inner",
    "field_norm_sq",
    "field_norm_S_sq",
]


@dataclass(frozen=True, eq=False)
class DofMap:
    """Velocity degrees of freedom and the Dirichlet-constrained subset."""

    n_vertices: int
    dim: int
    constrained: np.ndarray
    free: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DofMap":
        d = mesh.dim
        verts = mesh.dirichlet_vertices()
        constrained = (d * verts[:, None] + np.arange(d)).ravel()
        mask = np.ones(d * mesh.n_vertices, dtype=bool)
        mask[constrained] = False
        return cls(mesh.n_vertices, d, np.sort(constrained), np.flatnonzero(mask))

    @property
    def ndof(self) -> int:
        return self.n_vertices * self.dim

    def extend(self, free_values) -> np.ndarray:
        """Full vector from free values, zero on constrained dofs."""
        full = np.zeros(self.ndof)
        full[self.free] = free_values
        return full


def _as_flat(v, ndof):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != ndof:
        raise ValueError(f"velocity has {v.size} entries, expected {ndof}")
    return v


@lru_cache(maxsize=16)
def _basis_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape ``(nc, d+1, d)``."""
    x = mesh.vertices[mesh.cells]
    jac = x[:, 1:, :] - x[:, :1, :]
    g = np.transpose(np.linalg.inv(jac), (0, 2, 1))
    return np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)


@lru_cache(maxsize=16)
def strain_operator(mesh: Mesh) -> sp.csr_matrix:
    """Sparse map from nodal velocities to packed cellwise strains."""
    d, nc = mesh.dim, mesh.n_cells
    m = ncomp(d)
    rows_idx, cols_idx = np.triu_indices(d)
    grads = _basis_gradients(mesh)
    # local[k, s, a, q] = 1/2 (delta_qr dlam_a/dx_c + delta_qc dlam_a/dx_r) for s = (r, c)
    local = np.zeros((nc, m, d + 1, d))
    for s, (r, c) in enumerate(zip(rows_idx, cols_idx)):
        local[:, s, :, r] += 0.5 * grads[:, :, c]
        local[:, s, :, c] += 0.5 * grads[:, :, r]
    row = np.broadcast_to((m * np.arange(nc))[:, None, None, None] + np.arange(m)[None, :, None, None], local.shape)
    col = np.broadcast_to(d * mesh.cells[:, None, :, None] + np.arange(d)[None, None, None, :], local.shape)
    return sp.csr_matrix((local.ravel(), (row.ravel(), col.ravel())), shape=(nc * m, d * mesh.n_vertices))


def strain(mesh: Mesh, v) -> np.ndarray:
    """Cellwise symmetric gradient of a P1 velocity field, ``(nc, m)``."""
    v = _as_flat(v, mesh.dim * mesh.n_vertices)
    return (strain_operator(mesh) @ v).reshape(mesh.n_cells, ncomp(mesh.dim))


def _cell_weights(mesh: Mesh) -> np.ndarray:
    w = frobenius_weights(mesh.dim)
    return (mesh.volumes[:, None] * w[None, :]).ravel()


def stress_divergence(mesh: Mesh, tau) -> np.ndarray:
    """Vector of ``(tau, E(phi_i))_H`` over all velocity basis functions."""
    tau = np.asarray(tau, dtype=float).reshape(-1)
    return strain_operator(mesh).T @ (_cell_weights(mesh) * tau)


@lru_cache(maxsize=16)
def _mass_full(mesh: Mesh) -> sp.csr_matrix:
    d, nc = mesh.dim, mesh.n_cells
    nloc = d + 1
    ref = (np.ones((nloc, nloc)) + np.eye(nloc)) / ((d + 1) * (d + 2))
    vals = mesh.volumes[:, None, None] * ref[None]
    rows, cols, data = [], [], []
    for q in range(d):
        dofs = d * mesh.cells + q
        rows.append(np.broadcast_to(dofs[:, :, None], vals.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], vals.shape).ravel())
        data.append(vals.ravel())
    n = d * mesh.n_vertices
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def assemble_mass(mesh: Mesh, dofmap: DofMap | None = None) -> sp.csr_matrix:
    """Consistent P1 mass matrix on all velocity dofs.

    The per-cell scalar block is ``|K|/((d+1)(d+2)) (1 + delta_ij)``,
    repeated for every velocity component.
    """
    return _mass_full(mesh).copy()


@lru_cache(maxsize=16)
def _viscous_full(mesh: Mesh) -> sp.csr_matrix:
    B = strain_operator(mesh)
    return (B.T @ sp.diags(_cell_weights(mesh)) @ B).tocsr()


def assemble_viscous(mesh: Mesh) -> sp.csr_matrix:
    """Matrix of ``(E(u), E(phi))_H`` on all dofs."""
    return _viscous_full(mesh).copy()


def _elastic_full(mesh: Mesh, p: MaterialParams) -> sp.csr_matrix:
    B = strain_operator(mesh)
    wc = frobenius_weights(mesh.dim)[:, None] * matrix_C(p)
    block = sp.kron(sp.diags(mesh.volumes), sp.csr_matrix(wc))
    return (B.T @ block @ B).tocsr()


def assemble_step_matrix(mesh: Mesh, dofmap: DofMap, p: MaterialParams, dt: float) -> sp.csr_matrix:
    """``M/dt + eta K + dt K_C`` restricted to the free dofs."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    A = _mass_full(mesh) / dt + p.viscosity * _viscous_full(mesh) + dt * _elastic_full(mesh, p)
    free = dofmap.free
    A = A[free][:, free].tocsr()
    # exact symmetry; assembly sums in different orders
    return ((A + A.T) * 0.5).tocsr()


def load_vector(mesh: Mesh, dofmap: DofMap, body_force=None, traction=None) -> np.ndarray:
    """Discrete load functional ``<f, phi_i>`` on all dofs.

    ``body_force`` is cellwise constant, shape ``(nc, d)``; ``traction`` is
    constant per traction facet, ordered as ``mesh.facets(TRACTION)``.
    Each P1 basis function integrates to ``|K|/(d+1)`` over a cell and to
    ``|F|/d`` over a facet.
    """
    d = mesh.dim
    out = np.zeros(dofmap.ndof)
    if body_force is not None:
        fb = np.broadcast_to(np.asarray(body_force, dtype=float), (mesh.n_cells, d))
        share = (mesh.volumes / (d + 1))[:, None] * fb
        for q in range(d):
            np.add.at(out, d * mesh.cells + q, share[:, None, q])
    if traction is not None:
        facets = mesh.facets(TRACTION)
        if len(facets):
            tb = np.broadcast_to(np.asarray(traction, dtype=float), (len(facets), d))
            share = (mesh.facet_measures(facets) / d)[:, None] * tb
            for q in range(d):
                np.add.at(out, d * facets + q, share[:, None, q])
    return out


def assemble_rhs(mesh, dofmap, p, dt, v_prev, sigma_prev, f_n, h_n) -> np.ndarray:
    """Right-hand side of the velocity system on the free dofs.

    ``M v_prev / dt + <f_n, phi> - (sigma_prev + dt C h_n, E(phi))``, with
    ``f_n`` the assembled load vector (see :func:`load_vector`).
    """
    v_prev = _as_flat(v_prev, dofmap.ndof)
    full = _mass_full(mesh) @ v_prev / dt + np.asarray(f_n, dtype=float)
    full -= stress_divergence(mesh, np.asarray(sigma_prev) + dt * apply_C(p, h_n))
    return full[dofmap.free]


_GAUSS2 = 0.5 / np.sqrt(3.0)


def time_average(fn, t0: float, t1: float):
    """Average of ``fn`` over ``[t0, t1]`` by two-point Gauss quadrature."""
    if not t1 > t0:
        raise ValueError("time slab must have positive length")
    mid, half = 0.5 * (t0 + t1), t1 - t0
    a, b = fn(mid - _GAUSS2 * half), fn(mid + _GAUSS2 * half)
    return 0.5 * (np.asarray(a, dtype=float) + np.asarray(b, dtype=float))


def velocity_inner(mesh: Mesh, u, w) -> float:
    """``(u, w)`` in L2 using the consistent mass matrix."""
    n = mesh.dim * mesh.n_vertices
    return float(_as_flat(u, n) @ (_mass_full(mesh) @ _as_flat(w, n)))


def field_inner(mesh: Mesh, a, b) -> float:
    """``(A, B)_H`` for cellwise constant tensor fields."""
    return float(np.sum(mesh.volumes * inner(a, b)))


def field_norm_sq(mesh: Mesh, a) -> float:
    return field_inner(mesh, a, a)


def field_norm_S_sq(mesh: Mesh, p: MaterialParams, a) -> float:
    return float(np.sum(mesh.volumes * norm_S_sq(p, a)))
