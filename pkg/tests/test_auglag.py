import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavsolve.artifacts import read_table
from cavsolve.auglag import (
    AugLagConfig,
    printed_unit,
    replay_block,
    replay_table,
    run_continuation,
    run_outer,
    update_multiplier,
    update_penalty,
    validate_schedule,
)
from cavsolve.config import TABLE1_CONFIG, TABLE1_CSV
from cavsolve.fem import BoundaryData, CavitationProblem, affine_field, is_admissible
from cavsolve.flow import FlowConfig
from cavsolve.material import MaterialModel
from cavsolve.mesh import MeshParams, build_annulus
from cavsolve.oracles import REFERENCE_MULTIPLIER, initializer_z_eps
from cavsolve.runconfig import load_run_config

FAST_FLOW = FlowConfig(tol_u=1e-2, linear_solver="direct")
SMALL = MeshParams(n_r=8, n_theta=48, grading=1.1)

reals = st.floats(-1e3, 1e3, allow_nan=False)
penalties = st.floats(1e-3, 1e4)


def test_update_examples():
    assert update_multiplier(0.0, 5.0, -0.435566) == pytest.approx(-2.17783)
    assert update_penalty(5.0, -0.435566, 0.0) == 10.0
    assert update_penalty(10.0, -0.0182433, -0.108628) == 10.0
    assert update_penalty(10.0, 0.00123636, -0.00175846) == 20.0
    assert update_penalty(10.0, 1.0, 2.0, gamma=0.5, beta=3.0) == 10.0
    assert update_penalty(10.0, 1.0, 1.0, gamma=0.5, beta=3.0) == 30.0


@given(penalties, reals, reals)
def test_penalty_only_keeps_or_grows(eta, c, c_prev):
    assert update_penalty(eta, c, c_prev) / eta in (1.0, 2.0)


@given(reals, penalties)
def test_feasible_state_is_a_fixed_point(mu, eta):
    assert update_multiplier(mu, eta, 0.0) == mu
    assert update_penalty(eta, 0.0, 0.0) == eta


@pytest.mark.parametrize(
    "kwargs",
    [{"gamma": 1.0}, {"gamma": 0.0}, {"beta": 1.0}, {"eta1": 0.0}, {"tol_mu": 0.0}, {"max_outer": 0}],
)
def test_auglag_config_validation(kwargs):
    with pytest.raises(ValueError):
        AugLagConfig(**kwargs)


def test_printed_unit():
    assert printed_unit(-2.17783) == pytest.approx(1e-5)
    assert printed_unit(5.80566e-05) == pytest.approx(1e-10)
    assert printed_unit(11.3636) == pytest.approx(1e-4)
    assert printed_unit(0.0) == 0.0


def test_validate_schedule():
    assert validate_schedule([0.1, 0.05]) == [0.1, 0.05]
    for bad in ([], [0.1, 0.1], [0.05, 0.1], [1.0], [0.0]):
        with pytest.raises(ValueError):
            validate_schedule(bad)


def test_reference_table_replays_cleanly():
    rows = read_table(TABLE1_CSV)
    assert len(rows) == 44
    assert replay_table(rows) == []


def test_perturbed_constraint_breaks_the_next_multiplier():
    rows = read_table(TABLE1_CSV)
    target = next(r for r in rows if r["eps"] == 0.1 and r["j"] == 2)
    target["c"] *= 1.1
    mismatches = replay_table(rows)
    assert [(m.eps, m.j, m.column) for m in mismatches] == [(0.1, 3, "mu")]
    assert mismatches[0].replayed == pytest.approx(-3.26411 + 10 * 1.1 * -0.0182433)


def test_altered_penalty_is_reported():
    rows = read_table(TABLE1_CSV)
    target = next(r for r in rows if r["eps"] == 0.05 and r["j"] == 3)
    target["eta"] = 40.0
    mismatch = replay_table(rows)[0]
    assert (mismatch.eps, mismatch.j, mismatch.column) == (0.05, 3, "eta")
    assert (mismatch.printed, mismatch.replayed) == (40.0, 20.0)


def test_replay_block_follows_the_recurrence():
    block = [
        {"eps": 0.1, "j": 0, "c": -0.1, "mu": 0.0, "eta": 10.0},
        {"eps": 0.1, "j": 1, "c": -0.01, "mu": -1.0, "eta": 20.0},
        {"eps": 0.1, "j": 2, "c": 0.0, "mu": -1.2, "eta": 20.0},
    ]
    assert replay_block(block) == []
    block[2]["eta"] = 40.0
    (mismatch,) = replay_block(block)
    assert (mismatch.j, mismatch.column, mismatch.printed, mismatch.replayed) == (2, "eta", 40.0, 20.0)


def test_replay_sorts_rows_within_a_block():
    rows = read_table(TABLE1_CSV)
    assert replay_table(list(reversed(rows))) == []


def test_feasible_start_stops_after_one_iteration(coarse_mesh):
    unit = BoundaryData()
    problem = CavitationProblem(coarse_mesh, MaterialModel.stress_free(), unit, coarse_mesh.hole_area)
    result = run_outer(problem, affine_field(coarse_mesh, unit), FAST_FLOW)
    assert result.converged
    assert len(result.records) == 1
    assert result.mu == pytest.approx(0.0, abs=1e-12)
    assert result.records[0].eta == 5.0


def test_outer_iterations_follow_the_update_rules(small_mesh, fluid, stretch, volume):
    problem = CavitationProblem(small_mesh, fluid, stretch, volume)
    config = AugLagConfig(max_outer=8)
    seen = []
    result = run_outer(
        problem,
        initializer_z_eps(small_mesh, stretch, volume),
        FAST_FLOW,
        config,
        on_step=lambda j, diag: seen.append(j),
    )
    records = result.records
    assert [r.j for r in records] == list(range(len(records)))
    assert records[0].mu == 0.0 and records[0].eta == 5.0
    c_prev = 0.0
    for current, following in zip(records, records[1:]):
        assert following.mu == update_multiplier(current.mu, current.eta, current.c)
        assert following.eta == update_penalty(current.eta, current.c, c_prev)
        c_prev = current.c
    last = records[-1]
    if result.converged:
        assert result.mu == update_multiplier(last.mu, last.eta, last.c)
    assert abs(last.c) < abs(records[0].c)
    assert seen == sorted(seen)
    assert sum(r.flow_steps for r in records) == len(seen)
    for r in records:
        assert r.e_pen == pytest.approx(r.e_raw + r.mu * r.c + 0.5 * r.eta * r.c**2)
    assert is_admissible(small_mesh, result.field)


def test_max_outer_caps_the_loop(caplog, small_mesh, fluid, stretch, volume):
    problem = CavitationProblem(small_mesh, fluid, stretch, volume)
    result = run_outer(
        problem, initializer_z_eps(small_mesh, stretch, volume), FAST_FLOW, AugLagConfig(max_outer=1)
    )
    assert not result.converged
    assert len(result.records) == 1
    assert "max_outer=1" in caplog.text


def test_capped_inner_solve_is_not_converged(caplog, small_mesh, fluid, stretch, volume):
    problem = CavitationProblem(small_mesh, fluid, stretch, volume)
    capped = FlowConfig(max_steps=1, tol_u=1e-12, linear_solver="direct")
    result = run_outer(
        problem, initializer_z_eps(small_mesh, stretch, volume), capped, AugLagConfig(tol_mu=10.0)
    )
    last = result.records[-1]
    assert len(result.records) < AugLagConfig().max_outer
    assert result.mu == update_multiplier(last.mu, last.eta, last.c)
    assert not any(r.inner_converged for r in result.records)
    assert all(r.flow_steps == 1 for r in result.records)
    assert not result.converged
    assert "stopped at max_steps" in caplog.text


def test_continuation_warm_starts_each_radius(fluid, stretch, volume):
    finished = []
    steps = []
    results = run_continuation(
        [0.1, 0.05],
        fluid,
        stretch,
        volume,
        mesh_params=SMALL,
        flow_config=FAST_FLOW,
        config=AugLagConfig(max_outer=6),
        on_result=finished.append,
        on_step=lambda eps, j, diag: steps.append(eps),
    )
    assert [step.eps for step in results] == [0.1, 0.05]
    assert finished == results
    assert set(steps) == {0.1, 0.05}
    for step in results:
        assert step.field.mesh.eps == step.eps
        assert is_admissible(step.field.mesh, step.field)
        assert step.energy == pytest.approx(step.problem.energy(step.field))


def test_single_radius_continuation_matches_run_outer(fluid, stretch, volume):
    config = AugLagConfig(max_outer=3)
    (step,) = run_continuation([0.1], fluid, stretch, volume, SMALL, FAST_FLOW, config)
    mesh = build_annulus(0.1, SMALL.n_r, SMALL.n_theta, SMALL.grading)
    problem = CavitationProblem(mesh, fluid, stretch, volume)
    direct = run_outer(problem, initializer_z_eps(mesh, stretch, volume), FAST_FLOW, config)
    assert step.records == direct.records
    assert step.mu == direct.mu


def test_continuation_rejects_unknown_start(fluid, stretch, volume):
    with pytest.raises(ValueError, match="start"):
        run_continuation([0.1], fluid, stretch, volume, start="random")


def test_affine_start_is_used_when_asked():
    unit = BoundaryData()
    mesh = build_annulus(0.1, 4, 16)
    material = MaterialModel.stress_free()
    (step,) = run_continuation(
        [0.1], material, unit, mesh.hole_area, MeshParams(4, 16, 1.0), FAST_FLOW, start="affine"
    )
    assert step.converged
    assert step.records[0].flow_steps == 1


def test_default_inner_tolerance_lets_the_multiplier_settle(small_mesh, fluid, stretch, volume):
    problem = CavitationProblem(small_mesh, fluid, stretch, volume)
    result = run_outer(
        problem, initializer_z_eps(small_mesh, stretch, volume), FlowConfig(linear_solver="direct")
    )
    assert result.converged
    assert all(r.inner_converged for r in result.records)
    assert max(r.eta for r in result.records) <= 5.0 * 2**6


@pytest.mark.slow
def test_bundled_config_settles_on_the_first_two_radii():
    run_config = load_run_config(TABLE1_CONFIG)
    results = run_continuation(
        run_config.eps_schedule[:2],
        run_config.material,
        run_config.boundary,
        run_config.volume,
        mesh_params=run_config.mesh,
        flow_config=run_config.flow,
        config=run_config.auglag,
        start=run_config.start,
        r_shell=run_config.r_shell,
    )
    for step in results:
        assert step.converged
        assert len(step.records) <= 10
        assert max(r.eta for r in step.records) <= 5.0 * 2**6
    assert results[-1].mu == pytest.approx(REFERENCE_MULTIPLIER, rel=0.05)
