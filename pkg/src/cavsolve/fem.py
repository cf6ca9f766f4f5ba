"""Piecewise-linear finite elements for the regularized cavitation problem.

Nodal fields are (N, 2) arrays of deformed positions y = u(x). The deformation
gradient is constant on each triangle, so one-point quadrature integrates every
functional of a P1 field exactly. All element loops run through
``_map_elements``; with ``CAVSOLVE_THREADS > 1`` the triangles are processed in
chunks on a thread pool and concatenated in order, which keeps every reduction
bitwise identical to the sequential run.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from cavsolve.config import element_threads
from cavsolve.errors import DeterminantCollapseError, LinearSolveError
from cavsolve.material import MaterialModel, cof2, det2
from cavsolve.mesh import Mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryData:
    """Affine Dirichlet data u(x) = A x on the unit circle, A = diag(lambda1, lambda2)."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        """Require positive stretches."""
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError(
                f"stretches must be positive, got lambda1={self.lambda1}, lambda2={self.lambda2}"
            )

    @property
    def matrix(self) -> np.ndarray:
        """The matrix A."""
        return np.diag([float(self.lambda1), float(self.lambda2)])

    @property
    def det(self) -> float:
        """det A = lambda1 * lambda2."""
        return float(self.lambda1) * float(self.lambda2)

    @property
    def stretches(self) -> tuple[float, float]:
        """(lambda1, lambda2)."""
        return float(self.lambda1), float(self.lambda2)


@dataclass(frozen=True, eq=False)
class DeformationField:
    """Nodal deformation on a mesh; outer-boundary values are forced to A x."""

    mesh: Mesh
    values: np.ndarray
    boundary: BoundaryData

    def __post_init__(self):
        """Copy the values and impose the Dirichlet data."""
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes, 2):
            raise ValueError(
                f"expected values of shape {(self.mesh.n_nodes, 2)}, got {values.shape}"
            )
        outer = self.mesh.outer_boundary
        values[outer] = self.mesh.nodes[outer] @ self.boundary.matrix.T
        object.__setattr__(self, "values", values)


def affine_field(mesh: Mesh, boundary: BoundaryData) -> DeformationField:
    """The homogeneous deformation u(x) = A x."""
    return DeformationField(mesh, mesh.nodes @ boundary.matrix.T, boundary)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, DeformationField) else np.asarray(u, dtype=float)


def _map_elements(kernel: Callable[[slice], np.ndarray], n_elements: int) -> np.ndarray:
    threads = element_threads()
    if threads == 1 or n_elements < 2 * threads:
        return kernel(slice(0, n_elements))
    bounds = np.linspace(0, n_elements, threads + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(kernel, chunks))
    return np.concatenate(parts)


def _gradients(mesh: Mesh, u: np.ndarray, rows: slice) -> np.ndarray:
    corners = u[mesh.triangles[rows]]
    return np.einsum("mai,maj->mij", corners, mesh.shape_gradients[rows])


def _admissible_gradients(mesh: Mesh, u: np.ndarray, rows: slice) -> np.ndarray:
    F = _gradients(mesh, u, rows)
    dets = det2(F)
    if np.any(dets <= 0.0):
        local = int(np.argmax(dets <= 0.0))
        raise DeterminantCollapseError(dets[local], (rows.start or 0) + local)
    return F


def deformation_gradients(mesh: Mesh, u) -> np.ndarray:
    """Per-triangle deformation gradients, shape (T, 2, 2)."""
    u = _values(u)
    return _map_elements(lambda rows: _gradients(mesh, u, rows), mesh.n_triangles)


def determinants(mesh: Mesh, u) -> np.ndarray:
    """Per-triangle det of the deformation gradient."""
    return det2(deformation_gradients(mesh, u))


def is_admissible(mesh: Mesh, u) -> bool:
    """True when every triangle keeps a positive determinant."""
    return bool(np.all(determinants(mesh, u) > 0.0))


def energy_eps(mesh: Mesh, u, material: MaterialModel) -> float:
    """Stored energy E_eps(u) = sum over triangles of area * W(grad u).

    Raises:
        DeterminantCollapseError: if a triangle has det grad u <= 0.
    """
    u = _values(u)

    def kernel(rows: slice) -> np.ndarray:
        F = _admissible_gradients(mesh, u, rows)
        return mesh.areas[rows] * material.energy_density(F)

    return float(np.sum(_map_elements(kernel, mesh.n_triangles)))


def constraint_eps(mesh: Mesh, u, boundary: BoundaryData, volume: float) -> float:
    """Volume constraint c_eps(u) = int det grad u - det A |Omega| + V.

    |Omega| is the area of the polygonal unit disk of the mesh, so the affine
    state with V = 0 satisfies the constraint up to the hole area.
    """
    u = _values(u)

    def kernel(rows: slice) -> np.ndarray:
        return mesh.areas[rows] * det2(_gradients(mesh, u, rows))

    volume_ratio = float(np.sum(_map_elements(kernel, mesh.n_triangles)))
    return volume_ratio - boundary.det * mesh.disk_area + float(volume)


def penalty_energy(
    mesh: Mesh,
    u,
    material: MaterialModel,
    boundary: BoundaryData,
    volume: float,
    mu: float,
    eta: float,
) -> float:
    """Penalized energy E + mu c + eta c^2 / 2."""
    c = constraint_eps(mesh, u, boundary, volume)
    return energy_eps(mesh, u, material) + mu * c + 0.5 * eta * c * c


def assemble_residual(
    mesh: Mesh,
    u,
    material: MaterialModel,
    boundary: BoundaryData,
    volume: float,
    mu: float,
    eta: float,
) -> np.ndarray:
    """Gradient of ``penalty_energy`` with respect to the nodal values.

    Returns an (N, 2) covector whose row ``a`` is
    sum_T area [P(grad u) + (mu + eta c) cof(grad u)] grad phi_a; rows of
    outer-boundary nodes are zero.
    """
    u = _values(u)
    load = mu + eta * constraint_eps(mesh, u, boundary, volume)

    def kernel(rows: slice) -> np.ndarray:
        F = _admissible_gradients(mesh, u, rows)
        stress = material.piola(F) + load * cof2(F)
        return mesh.areas[rows, None, None] * np.einsum(
            "mij,maj->mai", stress, mesh.shape_gradients[rows]
        )

    local = _map_elements(kernel, mesh.n_triangles)
    corners = mesh.triangles.ravel()
    residual = np.column_stack(
        [
            np.bincount(corners, weights=local[:, :, i].ravel(), minlength=mesh.n_nodes)
            for i in range(2)
        ]
    )
    residual[mesh.outer_boundary] = 0.0
    return residual


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Symmetric positive-definite operator on the free nodes.

    The same scalar matrix acts on both displacement components.

    Attributes:
        matrix: (n_free, n_free) CSR matrix.
        free: node indices of the rows, in order.
        n_nodes: total node count of the mesh.
    """

    matrix: sparse.csr_matrix
    free: np.ndarray
    n_nodes: int

    @cached_property
    def diagonal(self) -> np.ndarray:
        """Diagonal of the matrix (the Jacobi preconditioner inverts it)."""
        return self.matrix.diagonal()

    @cached_property
    def _direct_solve(self) -> Callable[[np.ndarray], np.ndarray]:
        return factorized(sparse.csc_matrix(self.matrix))

    def matvec(self, z: np.ndarray) -> np.ndarray:
        """Apply the operator to an (N, 2) nodal field (outer rows ignored)."""
        out = np.zeros((self.n_nodes, 2))
        out[self.free] = self.matrix @ np.asarray(z, dtype=float)[self.free]
        return out


def assemble_stiffness(mesh: Mesh) -> SparseOperator:
    """P1 Laplacian sum_T area grad phi_a . grad phi_b with outer nodes eliminated."""
    grads = mesh.shape_gradients
    local = mesh.areas[:, None, None] * np.einsum("taj,tbj->tab", grads, grads)
    tri = mesh.triangles
    rows = np.broadcast_to(tri[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(tri[:, None, :], local.shape).ravel()
    full = sparse.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    ).tocsr()
    free = mesh.free_nodes
    return SparseOperator(full[free][:, free].tocsr(), free, mesh.n_nodes)


def _pcg(
    op: SparseOperator, b: np.ndarray, x0: np.ndarray | None, tol: float, max_iter: int
) -> np.ndarray:
    norm_b = np.linalg.norm(b, axis=0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    x[:, norm_b == 0.0] = 0.0
    inv_diag = 1.0 / op.diagonal[:, None]
    r = b - op.matrix @ x
    target = tol * norm_b
    residual = np.linalg.norm(r, axis=0)
    z = inv_diag * r
    p = z.copy()
    rz = np.sum(r * z, axis=0)
    iterations = 0
    while np.any(residual > target):
        if iterations == max_iter:
            relres = np.max(residual[norm_b > 0] / norm_b[norm_b > 0])
            raise LinearSolveError(relres, iterations)
        iterations += 1
        Ap = op.matrix @ p
        pAp = np.sum(p * Ap, axis=0)
        active = residual > target
        alpha = np.where(active, rz / np.where(pAp == 0.0, 1.0, pAp), 0.0)
        x += alpha * p
        r -= alpha * Ap
        residual = np.linalg.norm(r, axis=0)
        z = inv_diag * r
        rz_next = np.sum(r * z, axis=0)
        beta = rz_next / np.where(rz == 0.0, 1.0, rz)
        p = z + beta * p
        rz = rz_next
    logger.debug("pcg converged in %d iterations", iterations)
    return x


def solve_spd(
    op: SparseOperator,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    method: str = "cg",
) -> np.ndarray:
    """Solve K z = rhs on the free nodes; outer rows of the result are zero.

    Args:
        op: the operator K.
        rhs: (N, 2) nodal covector (outer rows are ignored).
        tol: relative residual target of conjugate gradients.
        max_iter: iteration cap (default: 10 times the number of free nodes).
        x0: optional (N, 2) starting guess.
        method: "cg" (Jacobi-preconditioned conjugate gradients) or "direct"
            (cached sparse LU factorization).

    Raises:
        LinearSolveError: if conjugate gradients stops above ``tol``.
    """
    rhs = np.asarray(rhs, dtype=float)
    b = rhs[op.free]
    if method == "direct":
        x = np.column_stack([op._direct_solve(b[:, i]) for i in range(b.shape[1])])
    elif method == "cg":
        start = None if x0 is None else np.asarray(x0, dtype=float)[op.free]
        x = _pcg(op, b, start, tol, max_iter or 10 * len(op.free))
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    out = np.zeros((op.n_nodes, rhs.shape[1]))
    out[op.free] = x
    return out


@dataclass(frozen=True, eq=False)
class CavitationProblem:
    """One regularized problem: the eps-mesh, the material, A and the volume V."""

    mesh: Mesh
    material: MaterialModel
    boundary: BoundaryData
    volume: float
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def stiffness(self) -> SparseOperator:
        """Stiffness operator of the mesh, assembled on first use."""
        if "stiffness" not in self._cache:
            self._cache["stiffness"] = assemble_stiffness(self.mesh)
        return self._cache["stiffness"]

    def energy(self, u) -> float:
        """E_eps(u)."""
        return energy_eps(self.mesh, u, self.material)

    def constraint(self, u) -> float:
        """c_eps(u)."""
        return constraint_eps(self.mesh, u, self.boundary, self.volume)

    def penalty_energy(self, u, mu: float, eta: float) -> float:
        """E_eps,mu,eta(u)."""
        return penalty_energy(self.mesh, u, self.material, self.boundary, self.volume, mu, eta)

    def residual(self, u, mu: float, eta: float) -> np.ndarray:
        """Gradient of the penalized energy at u."""
        return assemble_residual(
            self.mesh, u, self.material, self.boundary, self.volume, mu, eta
        )

    def affine(self) -> DeformationField:
        """u = A x on this problem's mesh."""
        return affine_field(self.mesh, self.boundary)
