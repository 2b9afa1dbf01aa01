import numpy as np
import pytest

import lcefem as lc
from lcefem.assembly import assemble_residual_fields, free_layout
from lcefem.mesh import CLAMP, SYMX, SYMY, MeshParams, build_uniform_mesh
from lcefem.spaces import FIELDS, build_problem_spaces
from lcefem.solver import (
    ContinuationFailedError,
    SolverConfig,
    SolverError,
    apply_boundary_conditions,
    continuation_run,
    initial_state,
    newton_solve,
    nominal_stress,
    set_dirichlet,
    write_trajectory,
)


@pytest.fixture(scope="module")
def params():
    return lc.MaterialParams()


@pytest.fixture(scope="module")
def small(params):
    mesh = build_uniform_mesh(MeshParams(h=2**-2, ar=params.ar))
    return build_problem_spaces(mesh)


def test_boundary_values_match_stress_free_at_t0(small, params):
    values = apply_boundary_conditions(small, params, 0.0)
    a, ar = params.a, params.ar
    clamp = small.u.nodes_on(CLAMP)
    expected = 0.5 * ar * (a**0.25 - 1.0)
    assert np.allclose(values["u"][clamp * 2], expected, atol=1e-15)
    # identical to the closed-form displacement at X = AR
    displacement, _, _, lam0 = lc.stress_free_state(params)
    coords = small.u.node_coords[clamp]
    closed = displacement(coords[:, 0], coords[:, 1])
    assert np.allclose(values["u"][clamp * 2], closed[:, 0], atol=1e-14)
    assert np.allclose(values["u"][clamp * 2 + 1], closed[:, 1], atol=1e-14)
    assert np.allclose(values["lam"][small.lam.nodes_on(SYMX)], lam0, atol=1e-15)


def test_boundary_values_at_full_pull(small, params):
    values = apply_boundary_conditions(small, params, 1.0)
    a, ar = params.a, params.ar
    clamp = small.u.nodes_on(CLAMP)
    assert np.allclose(values["u"][clamp * 2], 0.5 * ar * (a**0.25 * 1.4 - 1.0), atol=1e-15)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_director_fixed_on_all_three_sides(small, params, t):
    values = apply_boundary_conditions(small, params, t)
    for tag in (SYMX, SYMY, CLAMP):
        nodes = small.n.nodes_on(tag)
        assert np.all(values["n"][nodes * 2] == 0.0)
        assert np.all(values["n"][nodes * 2 + 1] == 1.0)
        assert np.all(small.n.dirichlet_mask[nodes * 2])
        assert np.all(small.lam.dirichlet_mask[small.lam.nodes_on(tag)])


def test_rejects_t_outside_range(small, params):
    with pytest.raises(ValueError):
        apply_boundary_conditions(small, params, 1.5)


def test_newton_at_stress_free_is_immediate(small, params):
    state = initial_state(small, params)
    result = newton_solve(state, small, params)
    assert result.iterations <= 2
    assert result.residual_norms[-1] <= 1e-10


def test_newton_quadratic_convergence(small, params):
    # perturbation large enough for several pre-roundoff-floor iterations
    state = initial_state(small, params)
    rng = np.random.default_rng(0)
    indices, _, _ = free_layout(small)
    for name in FIELDS:
        idx = indices[name]
        getattr(state, name)[idx] += 1e-2 * rng.standard_normal(len(idx))
    result = newton_solve(state, small, params, SolverConfig(newton_abs_tol=1e-13))
    norms = [r for r in result.residual_norms if r > 1e-12]
    assert len(norms) >= 4
    ratios = [np.log(norms[i + 1]) / np.log(norms[i]) for i in range(len(norms) - 1)]
    for ratio in ratios[-2:]:
        assert abs(ratio - 2.0) <= 0.3


def test_newton_far_start_reports_failure(small, params):
    state = initial_state(small, params)
    state.u[:] = 0.0
    state.n[:] = 0.0
    state.p[:] = 0.0
    state.lam[:] = 0.0
    set_dirichlet(state, small, params, 0.0)
    config = SolverConfig(newton_max_iter=4)
    with pytest.raises(SolverError):
        newton_solve(state, small, params, config)


def test_continuation_with_fixed_clamp(params, small):
    frozen = lc.MaterialParams(M=0.0, dt=0.25)
    reference = initial_state(small, frozen)
    traj = continuation_run(frozen, SolverConfig(), small)
    assert len(traj.steps) == 5
    for step in traj.steps:
        assert np.max(np.abs(step.state.u - reference.u)) <= 1e-9
        assert np.max(np.abs(step.state.n - reference.n)) <= 1e-9


def test_continuation_structure(small, params):
    fast = lc.MaterialParams(dt=0.05)
    traj = continuation_run(fast, SolverConfig(), small)
    t = traj.t_values
    assert np.all(np.diff(t) > 0)
    assert t[0] == 0.0 and t[-1] == 1.0
    assert len(traj.steps) == 21
    for step in traj.steps:
        n_arr = step.state.n.reshape(-1, 2)
        assert np.max(np.abs(np.sum(n_arr * n_arr, axis=1) - 1.0)) <= 1e-9
        fields = assemble_residual_fields(step.state, fast, small)
        assert np.max(np.abs(fields["p"])) <= 1e-9  # weak incompressibility
        # constrained entries carry exactly the prescribed values
        values = apply_boundary_conditions(small, fast, step.t)
        for name in ("u", "n", "lam"):
            mask = small.space(name).dirichlet_mask
            assert np.array_equal(getattr(step.state, name)[mask], values[name][mask])


def test_newton_correction_stays_homogeneous(small, params):
    state = initial_state(small, params)
    set_dirichlet(state, small, params, 0.1)
    result = newton_solve(state, small, params)
    values = apply_boundary_conditions(small, params, 0.1)
    for name in ("u", "n", "lam"):
        mask = small.space(name).dirichlet_mask
        assert np.array_equal(getattr(result.state, name)[mask], values[name][mask])
    # the symmetry line keeps u_X = 0 and n = (0, 1) exactly
    symx = small.u.nodes_on(SYMX)
    assert np.all(result.state.u[symx * 2] == 0.0)


def test_nominal_stress_zero_at_rest(small, params):
    state = initial_state(small, params)
    assert abs(nominal_stress(state, small, params)) <= 1e-8


def test_strain_definition(small, params):
    fast = lc.MaterialParams(dt=0.5)
    traj = continuation_run(fast, SolverConfig(), small)
    strains = traj.strains(fast)
    assert abs(strains[-1] - 0.4) <= 1e-12


def test_step_halving_gives_up_at_dt_min(small, params):
    hopeless = lc.MaterialParams(dt=1.0)
    config = SolverConfig(newton_max_iter=1)
    with pytest.raises(ContinuationFailedError):
        continuation_run(hopeless, config, small)


def test_determinism(small, params):
    fast = lc.MaterialParams(dt=0.2)
    t1 = continuation_run(fast, SolverConfig(), small)
    t2 = continuation_run(fast, SolverConfig(), small)
    for s1, s2 in zip(t1.steps, t2.steps):
        assert np.array_equal(s1.state.u, s2.state.u)
        assert np.array_equal(s1.state.n, s2.state.n)
        assert np.array_equal(s1.state.p, s2.state.p)
        assert np.array_equal(s1.state.lam, s2.state.lam)
        assert s1.nominal_stress == s2.nominal_stress


def test_trajectory_csv(tmp_path, small, params):
    fast = lc.MaterialParams(dt=0.5)
    traj = continuation_run(fast, SolverConfig(), small)
    path = tmp_path / "curve.csv"
    write_trajectory(traj, fast, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,strain,elongation,nominal_stress,energy"
    assert len(lines) == 1 + len(traj.steps)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_abs_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(newton_max_iter=0)
