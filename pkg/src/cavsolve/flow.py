"""Gradient-flow inner solver for the penalized energy at fixed (mu, eta, eps).

One step solves  int grad z : grad v = -G(u_i)(v)  for the pseudo-velocity z
(Laplacian metric, z = 0 on the outer boundary, natural condition on the hole)
and moves u_{i+1} = u_i + dt z. A candidate is accepted only if every triangle
keeps det grad u > 0 and the penalized energy does not increase; otherwise dt
is cut by ``backtrack_factor`` down to ``min_dt``.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from cavsolve.errors import FlowStalledError
from cavsolve.fem import CavitationProblem, DeformationField, is_admissible, solve_spd

logger = logging.getLogger(__name__)

LINEAR_SOLVERS = ("cg", "direct")


@dataclass(frozen=True)
class FlowConfig:
    """Step control of the gradient flow.

    Attributes:
        dt: nominal pseudo-time step.
        tol_u: limit on the nominal update, the configured ``dt`` times
            ||z||_inf, below which the flow is converged. The step length
            actually accepted after backtracking is not compared with it.
        max_steps: step cap; reaching it returns a non-converged result.
        backtrack_factor: dt multiplier after a rejected candidate.
        min_dt: smallest step tried before the flow is declared stalled.
        dt_growth: dt multiplier after ``growth_after`` steps accepted first try.
        growth_after: run of first-try acceptances that triggers dt growth.
        linear_solver: "cg" or "direct".
        cg_tol: relative residual of the conjugate-gradient solves.
    """

    dt: float = 0.1
    tol_u: float = 1e-5
    max_steps: int = 5000
    backtrack_factor: float = 0.5
    min_dt: float = 1e-6
    dt_growth: float = 1.25
    growth_after: int = 5
    linear_solver: str = "cg"
    cg_tol: float = 1e-10

    def __post_init__(self):
        """Validate the step control."""
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        if not self.tol_u > 0:
            raise ValueError(f"tol_u must be > 0, got {self.tol_u}")
        if not 0 < self.min_dt <= self.dt:
            raise ValueError(f"min_dt must lie in (0, dt], got {self.min_dt}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.dt_growth < 1 or self.growth_after < 1:
            raise ValueError("dt_growth must be >= 1 and growth_after >= 1")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(
                f"linear_solver must be one of {LINEAR_SOLVERS}, got {self.linear_solver!r}"
            )


@dataclass(frozen=True)
class FlowDiagnostics:
    """State after an accepted step (step 0 describes the starting field)."""

    step: int
    dt: float
    energy: float
    c: float
    grad_norm: float


@dataclass(frozen=True, eq=False)
class FlowStep:
    """Outcome of one accepted step."""

    field: DeformationField
    accepted_dt: float
    diagnostics: FlowDiagnostics
    update_norm: float
    nominal_update: float
    backtracks: int
    velocity: np.ndarray = dataclasses.field(repr=False)


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Last iterate of a flow run with its history.

    ``nominal_update`` is the configured dt times ||z||_inf of the last step,
    the quantity compared with ``tol_u``.
    """

    field: DeformationField
    steps: int
    converged: bool
    diagnostics: FlowDiagnostics
    nominal_update: float
    trace: list[FlowDiagnostics] = dataclasses.field(default_factory=list, repr=False)


def _solve_velocity(
    problem: CavitationProblem, gradient: np.ndarray, config: FlowConfig, guess=None
) -> np.ndarray:
    return solve_spd(
        problem.stiffness,
        -gradient,
        tol=config.cg_tol,
        x0=guess,
        method=config.linear_solver,
    )


def flow_step(
    problem: CavitationProblem,
    field_i: DeformationField,
    mu: float,
    eta: float,
    dt: float,
    config: FlowConfig | None = None,
    step: int = 1,
    energy_i: float | None = None,
    guess: np.ndarray | None = None,
) -> FlowStep:
    """Take one safeguarded gradient-flow step.

    Args:
        problem: the regularized problem.
        field_i: current admissible field.
        mu: multiplier.
        eta: penalty.
        dt: step to try first.
        config: step control (defaults to ``FlowConfig()``).
        step: index reported in the diagnostics.
        energy_i: penalized energy of ``field_i`` if already known.
        guess: starting guess for the velocity solve.

    Raises:
        FlowStalledError: if no step above ``min_dt`` is acceptable.
    """
    config = config or FlowConfig()
    u = field_i.values
    if energy_i is None:
        energy_i = problem.penalty_energy(u, mu, eta)
    gradient = problem.residual(u, mu, eta)
    velocity = _solve_velocity(problem, gradient, config, guess)
    speed = float(np.max(np.abs(velocity)))
    grad_norm = float(np.max(np.abs(gradient)))

    backtracks = 0
    while dt >= config.min_dt:
        candidate = u + dt * velocity
        if is_admissible(problem.mesh, candidate):
            energy = problem.penalty_energy(candidate, mu, eta)
            if energy <= energy_i:
                new_field = dataclasses.replace(field_i, values=candidate)
                diagnostics = FlowDiagnostics(
                    step=step,
                    dt=dt,
                    energy=energy,
                    c=problem.constraint(candidate),
                    grad_norm=grad_norm,
                )
                return FlowStep(
                    field=new_field,
                    accepted_dt=dt,
                    diagnostics=diagnostics,
                    update_norm=dt * speed,
                    nominal_update=config.dt * speed,
                    backtracks=backtracks,
                    velocity=velocity,
                )
        dt *= config.backtrack_factor
        backtracks += 1

    last = FlowDiagnostics(
        step=step - 1,
        dt=dt,
        energy=energy_i,
        c=problem.constraint(u),
        grad_norm=grad_norm,
    )
    raise FlowStalledError(
        f"flow stalled: no acceptable step above min_dt={config.min_dt:g} "
        f"(energy {energy_i:.8g}, gradient norm {grad_norm:.3e})",
        last,
    )


def run_flow(
    problem: CavitationProblem,
    field_0: DeformationField,
    mu: float,
    eta: float,
    config: FlowConfig | None = None,
    on_step: Callable[[FlowDiagnostics], None] | None = None,
) -> FlowResult:
    """Iterate ``flow_step`` until the nominal update dt * ||z||_inf is below ``tol_u``.

    Args:
        problem: the regularized problem.
        field_0: admissible starting field.
        mu: multiplier.
        eta: penalty.
        config: step control.
        on_step: called with the diagnostics of every accepted step.

    Returns:
        FlowResult flagged non-converged when ``max_steps`` is reached.

    Raises:
        FlowStalledError: propagated from ``flow_step``.
    """
    config = config or FlowConfig()
    field_i = field_0
    energy = problem.penalty_energy(field_i.values, mu, eta)
    start = FlowDiagnostics(0, 0.0, energy, problem.constraint(field_i.values), float("nan"))
    trace = [start]
    dt = config.dt
    streak = 0
    guess = None
    converged = False

    for step in range(1, config.max_steps + 1):
        result = flow_step(
            problem, field_i, mu, eta, dt, config, step=step, energy_i=energy, guess=guess
        )
        field_i = result.field
        energy = result.diagnostics.energy
        guess = result.velocity
        trace.append(result.diagnostics)
        if on_step is not None:
            on_step(result.diagnostics)
        logger.debug(
            "flow step %d dt=%.3g energy=%.10g c=%.3e |G|=%.3e",
            step, result.accepted_dt, energy, result.diagnostics.c, result.diagnostics.grad_norm,
        )

        if result.nominal_update < config.tol_u:
            converged = True
            break

        if result.backtracks:
            dt = result.accepted_dt
            streak = 0
        else:
            streak += 1
            if streak >= config.growth_after:
                dt = min(dt * config.dt_growth, config.dt)
                streak = 0

    if not converged:
        logger.warning(
            "gradient flow hit max_steps=%d (mu=%g, eta=%g, last nominal update %.3e)",
            config.max_steps, mu, eta, result.nominal_update,
        )
    return FlowResult(
        field=field_i,
        steps=len(trace) - 1,
        converged=converged,
        diagnostics=trace[-1],
        nominal_update=result.nominal_update,
        trace=trace,
    )
