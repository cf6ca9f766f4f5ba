"""Closed-form references and boundary diagnostics.

The elastic fluid (kappa = 0) under affine data A x with a cavity of volume V
is minimized by the radial map

    u_V(x) = sqrt(d R^2 + 1 - d) A x / R,   R = |x|,   d = 1 - V / (pi det A),

whose Jacobian determinant is d det A everywhere, so its energy is
pi h(d det A) and the multiplier of the volume constraint is -h'(d det A).
The boundary functionals below (cavity volume, energy sensitivity, inner
traction) use the element-constant stresses and the edge midpoints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cavsolve.fem import (
    BoundaryData,
    DeformationField,
    affine_field,
    constraint_eps,
    deformation_gradients,
)
from cavsolve.material import MaterialModel, adj2, cof2, det2
from cavsolve.mesh import Mesh, build_annulus, edge_geometry

logger = logging.getLogger(__name__)

# Reference values of the fluid acceptance problem, A = diag(1.1, 1.4), V = pi 0.15^2
REFERENCE_ENERGY = 11.3749
REFERENCE_MULTIPLIER = -2.16650
REFERENCE_SENSITIVITY = (9.5287, 7.4868)
REFERENCE_D_EPS = 0.98079

FD_STEP = 1e-6


def _check_fluid(material: MaterialModel) -> None:
    if not material.is_fluid:
        raise ValueError(f"exact solutions exist only for the elastic fluid, got kappa={material.kappa}")


@dataclass(frozen=True)
class FluidExactSolution:
    """Radial cavitating minimizer of the elastic fluid.

    Attributes:
        boundary: affine Dirichlet data.
        volume: prescribed cavity volume V.
    """

    boundary: BoundaryData
    volume: float

    def __post_init__(self):
        """Require 0 < d <= 1."""
        if self.volume < 0:
            raise ValueError(f"V must be >= 0, got {self.volume}")
        if not self.d > 0:
            raise ValueError(
                f"V={self.volume} is too large for det A={self.boundary.det} (d={self.d:.6g} <= 0)"
            )

    @property
    def d(self) -> float:
        """Volume ratio 1 - V / (pi det A)."""
        return 1.0 - self.volume / (math.pi * self.boundary.det)

    @property
    def cavity_radius_factor(self) -> float:
        """The origin opens into the ellipse A B_rho with rho = sqrt(1 - d)."""
        return math.sqrt(1.0 - self.d)

    @property
    def jacobian_determinant(self) -> float:
        """det grad u_V = d det A."""
        return self.d * self.boundary.det

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Evaluate u_V at one point or an (m, 2) array of points with 0 < |x| <= 1.

        Raises:
            ValueError: if a point is the origin.
        """
        x = np.asarray(x, dtype=float)
        radius = np.linalg.norm(x, axis=-1)
        if np.any(radius == 0.0):
            raise ValueError("u_V is undefined at the origin")
        scale = np.sqrt(self.d * radius**2 + 1.0 - self.d) / radius
        return scale[..., None] * (x @ self.boundary.matrix.T)


def fluid_exact_eval(x: np.ndarray, boundary: BoundaryData, volume: float) -> np.ndarray:
    """u_V(x) for the given boundary data and cavity volume."""
    return FluidExactSolution(boundary, volume).eval(x)


def fluid_exact_field(mesh: Mesh, boundary: BoundaryData, volume: float) -> DeformationField:
    """Nodal interpolation of u_V on an eps-mesh."""
    return DeformationField(mesh, fluid_exact_eval(mesh.nodes, boundary, volume), boundary)


def fluid_exact_energy(boundary: BoundaryData, volume: float, material: MaterialModel) -> float:
    """E(u_V) = pi h(d det A).

    Raises:
        ValueError: for a non-fluid material or d <= 0.
    """
    _check_fluid(material)
    exact = FluidExactSolution(boundary, volume)
    return float(math.pi * material.h_eval(exact.jacobian_determinant))


def fluid_exact_multiplier(boundary: BoundaryData, volume: float, material: MaterialModel) -> float:
    """Multiplier of the volume constraint at u_V, -h'(d det A).

    Raises:
        ValueError: for a non-fluid material or d <= 0.
    """
    _check_fluid(material)
    exact = FluidExactSolution(boundary, volume)
    return float(-material.h_prime(exact.jacobian_determinant))


def fluid_exact_sensitivity(
    boundary: BoundaryData, volume: float, material: MaterialModel
) -> tuple[float, float]:
    """Derivatives of pi h(lambda1 lambda2 - V / pi) in lambda1 and lambda2."""
    _check_fluid(material)
    exact = FluidExactSolution(boundary, volume)
    slope = math.pi * float(material.h_prime(exact.jacobian_determinant))
    lambda1, lambda2 = boundary.stretches
    return slope * lambda2, slope * lambda1


def cavity_volume(mesh: Mesh, u) -> float:
    """Area enclosed by the image of the hole boundary.

    Evaluates 1/2 sum over inner edges of |e| (Adj F u_mid) . n with n the
    edge normal pointing away from the origin, which equals the area of the
    deformed inner polygon.
    """
    values = u.values if isinstance(u, DeformationField) else np.asarray(u, dtype=float)
    lengths, _, normals = edge_geometry(mesh, mesh.inner_edges)
    F = deformation_gradients(mesh, values)[mesh.inner_edge_triangles]
    midpoints = 0.5 * (values[mesh.inner_edges[:, 0]] + values[mesh.inner_edges[:, 1]])
    flux = np.einsum("eij,ej,ei->e", adj2(F), midpoints, normals)
    return float(0.5 * np.sum(lengths * flux))


def _boundary_stress(mesh: Mesh, u, material: MaterialModel, mu: float, triangles: np.ndarray):
    F = deformation_gradients(mesh, u)[triangles]
    return material.piola(F) + mu * cof2(F)


def sensitivity(
    mesh: Mesh,
    u,
    material: MaterialModel,
    boundary: BoundaryData,
    mu: float,
    axis: int,
) -> float:
    """Derivative of the constrained minimum energy with respect to lambda_axis.

    sum over outer edges of |e| x_i (S n)_i  -  mu |Omega| det A / lambda_i, with
    S = P(grad u) + mu cof(grad u) and |Omega| the area of the polygonal disk.

    Args:
        mesh: the eps-mesh.
        u: converged field.
        material: stored energy.
        boundary: Dirichlet data.
        mu: multiplier of ``u``.
        axis: 1 or 2.
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    i = axis - 1
    lengths, midpoints, normals = edge_geometry(mesh, mesh.outer_edges)
    stress = _boundary_stress(mesh, u, material, mu, mesh.outer_edge_triangles)
    traction = np.einsum("eij,ej->ei", stress, normals)
    boundary_term = float(np.sum(lengths * midpoints[:, i] * traction[:, i]))
    return boundary_term - mu * mesh.disk_area * boundary.det / boundary.stretches[i]


def inner_bc_residual(mesh: Mesh, u, material: MaterialModel, mu: float) -> float:
    """Largest traction |[P + mu cof] n| over the hole edges."""
    _, _, normals = edge_geometry(mesh, mesh.inner_edges)
    stress = _boundary_stress(mesh, u, material, mu, mesh.inner_edge_triangles)
    traction = np.einsum("eij,ej->ei", stress, normals)
    return float(np.max(np.linalg.norm(traction, axis=1)))


def shell_ratio(eps: float, boundary: BoundaryData, volume: float, r_shell: float) -> float:
    """Volume ratio d_eps = (r^2 - V / (pi det A)) / (r^2 - eps^2) inside the shell."""
    return (r_shell**2 - volume / (math.pi * boundary.det)) / (r_shell**2 - eps**2)


def initializer_z_eps(
    mesh: Mesh, boundary: BoundaryData, volume: float, r_shell: float = 0.5
) -> DeformationField:
    """Admissible start that opens the hole to a cavity of volume V.

    Inside B_{r_shell} the field is sqrt(d_eps R^2 + (1 - d_eps) r_shell^2) A x / R,
    outside it is A x. The hole boundary lands on an ellipse of area V and
    det grad z = d_eps det A inside the shell.

    Raises:
        ValueError: unless eps < r_shell < 1 and 0 < V < pi r_shell^2 det A.
    """
    if not mesh.eps < r_shell < 1.0:
        raise ValueError(f"r_shell must lie in (eps, 1) = ({mesh.eps}, 1), got {r_shell}")
    if not 0.0 < volume < math.pi * r_shell**2 * boundary.det:
        raise ValueError(
            f"V must lie in (0, pi r_shell^2 det A) = (0, {math.pi * r_shell**2 * boundary.det:.6g}), "
            f"got {volume}"
        )
    d_eps = shell_ratio(mesh.eps, boundary, volume, r_shell)
    radius = np.linalg.norm(mesh.nodes, axis=1)
    scale = np.ones_like(radius)
    shell = radius < r_shell
    scale[shell] = np.sqrt(d_eps * radius[shell] ** 2 + (1.0 - d_eps) * r_shell**2) / radius[shell]
    values = scale[:, None] * (mesh.nodes @ boundary.matrix.T)
    logger.debug("z_eps start: eps=%g r_shell=%g d_eps=%.6g", mesh.eps, r_shell, d_eps)
    return DeformationField(mesh, values, boundary)


@dataclass(frozen=True)
class IdentityCheck:
    """One row of the oracle identity report."""

    name: str
    passed: bool
    value: float
    expected: float
    detail: str = ""


def _check(name: str, value: float, expected: float, rtol: float, atol: float = 0.0, detail: str = ""):
    passed = bool(abs(value - expected) <= atol + rtol * abs(expected))
    return IdentityCheck(name, passed, float(value), float(expected), detail)


def _fd_piola_error(material: MaterialModel, F: np.ndarray) -> float:
    numeric = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            step = np.zeros((2, 2))
            step[i, j] = FD_STEP
            numeric[i, j] = (
                material.energy_density(F + step) - material.energy_density(F - step)
            ) / (2.0 * FD_STEP)
    exact = material.piola(F)
    return float(np.max(np.abs(numeric - exact)) / max(np.max(np.abs(exact)), 1.0))


def _fd_jacobian_determinant(exact: FluidExactSolution, points: np.ndarray) -> np.ndarray:
    dx = np.array([FD_STEP, 0.0])
    dy = np.array([0.0, FD_STEP])
    col_x = (exact.eval(points + dx) - exact.eval(points - dx)) / (2.0 * FD_STEP)
    col_y = (exact.eval(points + dy) - exact.eval(points - dy)) / (2.0 * FD_STEP)
    return col_x[:, 0] * col_y[:, 1] - col_y[:, 0] * col_x[:, 1]


def identity_suite(
    material: MaterialModel | None = None, table_csv: Path | None = None, seed: int = 0
) -> list[IdentityCheck]:
    """Evaluate the closed-form identities the solver relies on.

    Args:
        material: model checked for the stress-free reference and used for the
            fluid references; defaults to the stress-free elastic fluid.
        table_csv: convergence table replayed through the multiplier and
            penalty updates; skipped when None or missing.
        seed: seed of the random sample points.
    """
    # auglag imports this module for its z_eps start
    from cavsolve.artifacts import read_table
    from cavsolve.auglag import replay_table
    from cavsolve.config import FLUID_MATERIAL, TABLE1_STRETCHES, TABLE1_VOLUME

    material = material or MaterialModel.stress_free(**FLUID_MATERIAL)
    boundary = BoundaryData(*TABLE1_STRETCHES)
    volume = TABLE1_VOLUME
    rng = np.random.default_rng(seed)
    checks = []

    identity = np.eye(2)
    checks.append(
        _check("piola(I) = 0", float(np.max(np.abs(material.piola(identity)))), 0.0, 0.0, atol=1e-12)
    )
    F = np.array([[1.2, 0.1], [-0.2, 0.9]])
    cramer = np.max(np.abs(F @ adj2(F) - det2(F) * identity))
    checks.append(_check("F Adj F = det F I", float(cramer), 0.0, 0.0, atol=1e-14))
    checks.append(
        _check("piola = dW/dF (central differences)", _fd_piola_error(material, F), 0.0, 0.0, atol=1e-6)
    )

    exact = FluidExactSolution(boundary, volume)
    angles = rng.uniform(0.0, 2.0 * math.pi, 50)
    radii = rng.uniform(0.2, 0.95, 50)
    points = radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    dets = _fd_jacobian_determinant(exact, points)
    worst = float(np.max(np.abs(dets / exact.jacobian_determinant - 1.0)))
    checks.append(
        _check("det grad u_V = d det A", worst, 0.0, 0.0, atol=1e-6, detail="max relative deviation")
    )
    on_circle = points / radii[:, None]
    drift = np.max(np.abs(exact.eval(on_circle) - on_circle @ boundary.matrix.T))
    checks.append(_check("u_V(x) = A x on |x| = 1", float(drift), 0.0, 0.0, atol=1e-14))

    if material.is_fluid:
        checks.append(
            _check("fluid exact energy", fluid_exact_energy(boundary, volume, material), REFERENCE_ENERGY, 1e-4)
        )
        checks.append(
            _check(
                "fluid exact multiplier",
                fluid_exact_multiplier(boundary, volume, material),
                REFERENCE_MULTIPLIER,
                1e-5,
            )
        )
        closed = fluid_exact_sensitivity(boundary, volume, material)
        for axis, reference in enumerate(REFERENCE_SENSITIVITY):
            checks.append(_check(f"fluid exact sensitivity {axis + 1}", closed[axis], reference, 1e-4))
        for axis in range(2):
            stretches = list(boundary.stretches)
            stretches[axis] += FD_STEP
            upper = fluid_exact_energy(BoundaryData(*stretches), volume, material)
            stretches[axis] -= 2.0 * FD_STEP
            lower = fluid_exact_energy(BoundaryData(*stretches), volume, material)
            checks.append(
                _check(
                    f"sensitivity {axis + 1} = dE/dlambda{axis + 1}",
                    (upper - lower) / (2.0 * FD_STEP),
                    closed[axis],
                    1e-6,
                )
            )

    mesh = build_annulus(0.1, 8, 64)
    checks.append(
        _check("d_eps of z_eps", shell_ratio(mesh.eps, boundary, volume, 0.5), REFERENCE_D_EPS, 1e-5)
    )
    z_eps = initializer_z_eps(mesh, boundary, volume)
    checks.append(
        _check(
            "c_eps(z_eps) = V (1 - |polygon| / pi)",
            constraint_eps(mesh, z_eps, boundary, volume),
            volume * (1.0 - mesh.disk_area / math.pi),
            1e-9,
            atol=1e-12,
        )
    )
    checks.append(
        _check(
            "cavity volume of A x",
            cavity_volume(mesh, affine_field(mesh, boundary)),
            boundary.det * mesh.hole_area,
            1e-12,
        )
    )
    unit = BoundaryData()
    reference = affine_field(mesh, unit)
    sens = max(abs(sensitivity(mesh, reference, material, unit, 0.0, axis)) for axis in (1, 2))
    checks.append(_check("sensitivity at A = I, V = 0", sens, 0.0, 0.0, atol=1e-10))

    if table_csv is not None and Path(table_csv).exists():
        mismatches = replay_table(read_table(table_csv))
        checks.append(
            IdentityCheck(
                "convergence table replay",
                not mismatches,
                float(len(mismatches)),
                0.0,
                detail=f"{Path(table_csv).name}: {len(mismatches)} mismatching rows",
            )
        )

    failed = [check.name for check in checks if not check.passed]
    if failed:
        logger.warning("%d oracle identities failed: %s", len(failed), ", ".join(failed))
    return checks
