import logging

import numpy as np
import pytest
from conftest import random_admissible
from hypothesis import given
from hypothesis import strategies as st

from cavsolve.config import FLUID_MATERIAL, TABLE1_STRETCHES, TABLE1_VOLUME
from cavsolve.errors import FlowStalledError
from cavsolve.fem import (
    BoundaryData,
    CavitationProblem,
    DeformationField,
    affine_field,
    is_admissible,
)
from cavsolve.flow import FlowConfig, flow_step, run_flow
from cavsolve.material import MaterialModel
from cavsolve.mesh import build_annulus
from cavsolve.oracles import initializer_z_eps


@pytest.fixture
def problem(small_mesh, fluid, stretch, volume):
    return CavitationProblem(small_mesh, fluid, stretch, volume)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0},
        {"backtrack_factor": 1.0},
        {"tol_u": -1.0},
        {"min_dt": 1.0},
        {"max_steps": 0},
        {"dt_growth": 0.5},
        {"linear_solver": "gmres"},
    ],
)
def test_flow_config_validation(kwargs):
    with pytest.raises(ValueError):
        FlowConfig(**kwargs)


def test_single_step_descends_and_stays_admissible(problem):
    field = initializer_z_eps(problem.mesh, problem.boundary, problem.volume)
    before = problem.penalty_energy(field.values, 0.0, 5.0)
    step = flow_step(problem, field, 0.0, 5.0, 0.1)
    assert step.diagnostics.energy <= before
    assert is_admissible(problem.mesh, step.field)
    assert step.accepted_dt <= 0.1
    assert step.nominal_update == pytest.approx(0.1 * np.max(np.abs(step.velocity)))


def test_every_accepted_step_descends(problem):
    field = initializer_z_eps(problem.mesh, problem.boundary, problem.volume)
    seen = []
    result = run_flow(
        problem, field, -1.0, 10.0, FlowConfig(max_steps=40), on_step=seen.append
    )
    energies = [diag.energy for diag in result.trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert result.trace[0].step == 0
    assert seen == result.trace[1:]
    assert result.steps == len(seen)
    assert is_admissible(problem.mesh, result.field)
    np.testing.assert_array_equal(
        result.field.values[problem.mesh.outer_boundary],
        field.values[problem.mesh.outer_boundary],
    )


def test_stationary_start_converges_in_one_step(coarse_mesh):
    unit = BoundaryData()
    problem = CavitationProblem(coarse_mesh, MaterialModel.stress_free(), unit, coarse_mesh.hole_area)
    start = affine_field(coarse_mesh, unit)
    result = run_flow(problem, start, 0.0, 5.0)
    assert result.converged
    assert result.steps == 1
    np.testing.assert_allclose(result.field.values, start.values, atol=1e-12)


def test_step_cap_returns_unconverged_result(problem, caplog):
    field = initializer_z_eps(problem.mesh, problem.boundary, problem.volume)
    with caplog.at_level(logging.WARNING, logger="cavsolve.flow"):
        result = run_flow(problem, field, 0.0, 5.0, FlowConfig(max_steps=2, tol_u=1e-12))
    assert not result.converged
    assert result.nominal_update >= 1e-12
    assert result.steps == 2
    assert "max_steps=2" in caplog.text


def test_direct_and_cg_velocities_agree(problem):
    field = initializer_z_eps(problem.mesh, problem.boundary, problem.volume)
    cg = flow_step(problem, field, -0.5, 5.0, 0.05, FlowConfig(cg_tol=1e-12))
    lu = flow_step(problem, field, -0.5, 5.0, 0.05, FlowConfig(linear_solver="direct"))
    np.testing.assert_allclose(cg.velocity, lu.velocity, atol=1e-8 * np.max(np.abs(lu.velocity)))


class UphillProblem(CavitationProblem):
    """Every candidate looks worse than the current state."""

    def penalty_energy(self, u, mu, eta):
        return super().penalty_energy(u, mu, eta) + 1.0e3


def test_stall_raises_with_diagnostics(small_mesh, fluid, stretch, volume):
    problem = UphillProblem(small_mesh, fluid, stretch, volume)
    field = initializer_z_eps(small_mesh, stretch, volume)
    energy = CavitationProblem(small_mesh, fluid, stretch, volume).penalty_energy(field.values, 0.0, 5.0)
    with pytest.raises(FlowStalledError) as info:
        flow_step(problem, field, 0.0, 5.0, 0.1, FlowConfig(min_dt=1e-3), energy_i=energy)
    assert info.value.diagnostics.energy == energy


def test_collapsing_candidate_is_backtracked(problem):
    field = initializer_z_eps(problem.mesh, problem.boundary, problem.volume)
    step = flow_step(problem, field, 0.0, 5.0, 100.0)
    assert not is_admissible(problem.mesh, field.values + 100.0 * step.velocity)
    assert step.backtracks > 0
    assert step.accepted_dt == pytest.approx(100.0 * 0.5**step.backtracks)
    assert is_admissible(problem.mesh, step.field)


@given(st.integers(0, 2**32 - 1), st.floats(-3.0, 0.0), st.floats(1.0, 50.0))
def test_flow_descends_from_random_starts(seed, mu, eta):
    mesh = build_annulus(0.1, 4, 16)
    stretch = BoundaryData(*TABLE1_STRETCHES)
    problem = CavitationProblem(mesh, MaterialModel.stress_free(**FLUID_MATERIAL), stretch, TABLE1_VOLUME)
    start = DeformationField(mesh, random_admissible(mesh, stretch, np.random.default_rng(seed)), stretch)
    result = run_flow(problem, start, mu, eta, FlowConfig(max_steps=15, linear_solver="direct"))
    energies = [diag.energy for diag in result.trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert is_admissible(mesh, result.field)


def test_converged_flow_reports_its_nominal_update(coarse_mesh):
    unit = BoundaryData()
    problem = CavitationProblem(coarse_mesh, MaterialModel.stress_free(), unit, coarse_mesh.hole_area)
    config = FlowConfig(linear_solver="direct")
    result = run_flow(problem, affine_field(coarse_mesh, unit), 0.0, 5.0, config)
    assert result.converged
    assert result.nominal_update < config.tol_u
