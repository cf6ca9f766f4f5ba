"""Penalty-multiplier (augmented Lagrangian) outer loop and eps-continuation.

For fixed eps the outer loop minimizes E + mu_j c + eta_j c^2 / 2 with the
gradient flow, then updates

    mu_{j+1}  = mu_j + eta_j c_j
    eta_{j+1} = eta_j            if |c_j| <= gamma |c_{j-1}|
                beta * eta_j     otherwise          (c_{-1} = 0)

and stops once |mu_{j+1} - mu_j| < tol_mu * max(|mu_j|, mu_floor).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from cavsolve.fem import (
    BoundaryData,
    CavitationProblem,
    DeformationField,
    affine_field,
    determinants,
    is_admissible,
)
from cavsolve.flow import FlowConfig, FlowDiagnostics, run_flow
from cavsolve.material import MaterialModel
from cavsolve.mesh import MeshParams, build_annulus, fill_hole, interpolate
from cavsolve.oracles import initializer_z_eps

logger = logging.getLogger(__name__)

PRINTED_DIGITS = 6
STARTS = ("z_eps", "affine")


@dataclass(frozen=True)
class AugLagConfig:
    """Parameters of the multiplier and penalty updates.

    Attributes:
        gamma: required contraction of |c| to keep eta.
        beta: penalty growth factor.
        eta1: initial penalty.
        mu1: initial multiplier.
        tol_mu: relative multiplier change that stops the loop.
        max_outer: cap on outer iterations.
        mu_floor: lower bound for |mu_j| in the stopping test.
    """

    gamma: float = 0.25
    beta: float = 2.0
    eta1: float = 5.0
    mu1: float = 0.0
    tol_mu: float = 1e-3
    max_outer: int = 30
    mu_floor: float = 1e-8

    def __post_init__(self):
        """Validate the update parameters."""
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.beta > 1:
            raise ValueError(f"beta must be > 1, got {self.beta}")
        if not self.eta1 > 0:
            raise ValueError(f"eta1 must be > 0, got {self.eta1}")
        if not self.tol_mu > 0:
            raise ValueError(f"tol_mu must be > 0, got {self.tol_mu}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")


@dataclass(frozen=True)
class IterationRecord:
    """One row of the convergence table."""

    j: int
    c: float
    e_pen: float
    e_raw: float
    mu: float
    eta: float
    flow_steps: int
    inner_converged: bool = True


@dataclass(frozen=True, eq=False)
class OuterResult:
    """Converged (or last) field of the outer loop at one eps."""

    field: DeformationField
    mu: float
    records: list[IterationRecord]
    converged: bool


@dataclass(frozen=True, eq=False)
class ContinuationStep:
    """Result of the outer loop at one eps of the schedule."""

    eps: float
    field: DeformationField
    mu: float
    records: list[IterationRecord]
    energy: float
    converged: bool
    problem: CavitationProblem = field(repr=False)


def update_multiplier(mu_j: float, eta_j: float, c_j: float) -> float:
    """mu_{j+1} = mu_j + eta_j c_j."""
    return mu_j + eta_j * c_j


def update_penalty(
    eta_j: float, c_j: float, c_prev: float, gamma: float = 0.25, beta: float = 2.0
) -> float:
    """Keep eta if |c_j| <= gamma |c_prev|, multiply it by beta otherwise."""
    return eta_j if abs(c_j) <= gamma * abs(c_prev) else beta * eta_j


def run_outer(
    problem: CavitationProblem,
    field_init: DeformationField,
    flow_config: FlowConfig | None = None,
    config: AugLagConfig | None = None,
    on_step: Callable[[int, FlowDiagnostics], None] | None = None,
) -> OuterResult:
    """Run the penalty-multiplier iteration on one regularized problem.

    Each inner solve is warm-started from the previous outer iterate.

    Args:
        problem: the eps-problem.
        field_init: admissible starting field on ``problem.mesh``.
        flow_config: inner solver settings.
        config: outer loop settings.
        on_step: called as ``on_step(j, diagnostics)`` for every flow step.

    Returns:
        OuterResult with the updated multiplier mu_{j+1} of the last iteration.
        It is converged only when the multiplier test passed and the last
        inner solve stopped on its update tolerance rather than on max_steps.
    """
    flow_config = flow_config or FlowConfig()
    config = config or AugLagConfig()
    mu, eta, c_prev = config.mu1, config.eta1, 0.0
    field_j = field_init
    records: list[IterationRecord] = []
    converged = False

    for j in range(config.max_outer):
        callback = None if on_step is None else (lambda diag, j=j: on_step(j, diag))
        flow = run_flow(problem, field_j, mu, eta, flow_config, on_step=callback)
        field_j = flow.field
        c = problem.constraint(field_j.values)
        e_raw = problem.energy(field_j.values)
        record = IterationRecord(
            j=j,
            c=c,
            e_pen=e_raw + mu * c + 0.5 * eta * c * c,
            e_raw=e_raw,
            mu=mu,
            eta=eta,
            flow_steps=flow.steps,
            inner_converged=flow.converged,
        )
        records.append(record)
        logger.info(
            "eps=%g j=%d c=%.6g E_pen=%.6f mu=%.6g eta=%g (%d flow steps)",
            problem.mesh.eps, j, c, record.e_pen, mu, eta, flow.steps,
        )

        mu_next = update_multiplier(mu, eta, c)
        eta_next = update_penalty(eta, c, c_prev, config.gamma, config.beta)
        if abs(mu_next - mu) < config.tol_mu * max(abs(mu), config.mu_floor):
            mu = mu_next
            converged = flow.converged
            break
        mu, eta, c_prev = mu_next, eta_next, c

    if not records[-1].inner_converged:
        logger.warning(
            "last inner solve at eps=%g stopped at max_steps; result is not converged",
            problem.mesh.eps,
        )
    elif not converged:
        logger.warning("outer loop hit max_outer=%d at eps=%g", config.max_outer, problem.mesh.eps)
    return OuterResult(field=field_j, mu=mu, records=records, converged=converged)


def _warm_start(previous: ContinuationStep, problem: CavitationProblem, r_shell: float):
    field_new = interpolate(previous.field, problem.mesh)
    if is_admissible(problem.mesh, field_new):
        return field_new
    mean_det = float(
        np.sum(previous.problem.mesh.areas * determinants(previous.problem.mesh, previous.field))
        / previous.problem.mesh.annulus_area
    )
    field_new = fill_hole(field_new, previous.eps, mean_det)
    if is_admissible(problem.mesh, field_new):
        return field_new
    logger.warning(
        "warm start from eps=%g is not admissible on eps=%g; restarting from z_eps",
        previous.eps, problem.mesh.eps,
    )
    return initializer_z_eps(problem.mesh, problem.boundary, problem.volume, r_shell)


def run_continuation(
    eps_schedule: Sequence[float],
    material: MaterialModel,
    boundary: BoundaryData,
    volume: float,
    mesh_params: MeshParams | None = None,
    flow_config: FlowConfig | None = None,
    config: AugLagConfig | None = None,
    start: str = "z_eps",
    r_shell: float = 0.5,
    on_result: Callable[[ContinuationStep], None] | None = None,
    on_step: Callable[[float, int, FlowDiagnostics], None] | None = None,
) -> list[ContinuationStep]:
    """Solve the regularized problem for a decreasing sequence of hole radii.

    The first eps starts from ``z_eps`` (or ``A x``); every later eps starts
    from the previous solution carried over with ``interpolate``.

    Args:
        eps_schedule: strictly decreasing radii in (0, 1).
        material: stored energy.
        boundary: Dirichlet stretches.
        volume: prescribed cavity volume V.
        mesh_params: resolution used for every eps.
        flow_config: inner solver settings.
        config: outer loop settings.
        start: "z_eps" or "affine" for the first eps.
        r_shell: shell radius of the z_eps initializer.
        on_result: called with each finished ``ContinuationStep``.
        on_step: called as ``on_step(eps, j, diagnostics)`` for every flow step.

    Raises:
        ValueError: for an invalid schedule or start.
    """
    schedule = validate_schedule(eps_schedule)
    if start not in STARTS:
        raise ValueError(f"start must be one of {STARTS}, got {start!r}")
    mesh_params = mesh_params or MeshParams()
    results: list[ContinuationStep] = []

    for eps in schedule:
        mesh = build_annulus(eps, mesh_params.n_r, mesh_params.n_theta, mesh_params.grading)
        problem = CavitationProblem(mesh, material, boundary, volume)
        if results:
            field_init = _warm_start(results[-1], problem, r_shell)
        elif start == "affine":
            field_init = affine_field(mesh, boundary)
        else:
            field_init = initializer_z_eps(mesh, boundary, volume, r_shell)

        step_callback = None if on_step is None else (lambda j, d, eps=eps: on_step(eps, j, d))
        outer = run_outer(problem, field_init, flow_config, config, on_step=step_callback)
        step = ContinuationStep(
            eps=eps,
            field=outer.field,
            mu=outer.mu,
            records=outer.records,
            energy=problem.energy(outer.field.values),
            converged=outer.converged,
            problem=problem,
        )
        results.append(step)
        logger.info("eps=%g finished: E=%.6f mu=%.6g converged=%s", eps, step.energy, step.mu, step.converged)
        if on_result is not None:
            on_result(step)
    return results


def validate_schedule(eps_schedule: Iterable[float]) -> list[float]:
    """Return the schedule as floats after checking it decreases strictly in (0, 1)."""
    schedule = [float(eps) for eps in eps_schedule]
    if not schedule:
        raise ValueError("eps_schedule must not be empty")
    if any(not 0.0 < eps < 1.0 for eps in schedule):
        raise ValueError(f"eps_schedule entries must lie in (0, 1), got {schedule}")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"eps_schedule must be strictly decreasing, got {schedule}")
    return schedule


def printed_unit(value: float, digits: int = PRINTED_DIGITS) -> float:
    """Size of one unit in the last place of ``value`` printed with ``digits`` significant digits."""
    if value == 0 or not math.isfinite(value):
        return 0.0
    return 10.0 ** (math.floor(math.log10(abs(value))) - digits + 1)


@dataclass(frozen=True)
class ReplayMismatch:
    """A row whose printed mu or eta does not follow from the recurrence."""

    eps: float
    j: int
    column: str
    printed: float
    replayed: float


def replay_block(rows: Sequence[dict], gamma: float = 0.25, beta: float = 2.0) -> list[ReplayMismatch]:
    """Check the mu and eta columns of one eps block against the update rules.

    Each row needs the keys ``eps``, ``j``, ``c``, ``mu`` and ``eta``. The
    multiplier of row j + 1 is recomputed from the printed mu_j, eta_j, c_j
    and compared within the printing precision; the penalty is compared exactly.
    """
    mismatches = []
    c_prev = 0.0
    for current, following in zip(rows, rows[1:]):
        eta = update_penalty(current["eta"], current["c"], c_prev, gamma, beta)
        if eta != following["eta"]:
            mismatches.append(
                ReplayMismatch(following["eps"], following["j"], "eta", following["eta"], eta)
            )
        mu = update_multiplier(current["mu"], current["eta"], current["c"])
        slack = 0.5 * (
            printed_unit(following["mu"])
            + printed_unit(current["mu"])
            + current["eta"] * printed_unit(current["c"])
        )
        if abs(mu - following["mu"]) > slack * (1.0 + 1e-9):
            mismatches.append(
                ReplayMismatch(following["eps"], following["j"], "mu", following["mu"], mu)
            )
        c_prev = current["c"]
    return mismatches


def replay_table(rows: Sequence[dict], gamma: float = 0.25, beta: float = 2.0) -> list[ReplayMismatch]:
    """Replay every eps block of a convergence table (rows in table order)."""
    blocks: dict[float, list[dict]] = {}
    for row in rows:
        blocks.setdefault(row["eps"], []).append(row)
    mismatches = []
    for block in blocks.values():
        block = sorted(block, key=lambda row: row["j"])
        mismatches.extend(replay_block(block, gamma, beta))
    return mismatches
