"""Newton continuation for the clamped-pulling experiment.

The pulling is driven by a parameter t in [0, 1]: the clamped edge
prescribes u_X = 0.5 AR (a^(1/4)(1+Mt) - 1) so the elongation factor grows
from 1 (the stress-free pre-stretch) to 1+M.  Each continuation step applies
the new boundary values to the previous converged state and re-solves the
equilibrium equations by Newton's method; the linear solve is a direct
sparse factorization of the full symmetric indefinite four-field matrix
(the primal form is provably not elliptic at the stress-free state, so
Krylov methods with definiteness assumptions are unsafe).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    assemble_energy,
    assemble_jacobian,
    assemble_residual,
    assemble_residual_fields,
    free_layout,
)
from .btw_core import MaterialParams, stress_free_state
from .mesh import CLAMP, SYMX, SYMY
from .spaces import FIELDS, FieldState, ProblemSpaces


class SolverError(Exception):
    """Base class for solver failures."""


class MaxIterationsError(SolverError):
    """Newton did not reach the residual tolerance."""


class SingularFactorizationError(SolverError):
    """The sparse factorization of the Newton matrix failed."""


class ContinuationFailedError(SolverError):
    """Step halving reached dt_min without convergence."""


@dataclass(frozen=True)
class SolverConfig:
    """Newton and continuation controls.

    dt_min defaults to dt/16 at run time; the residual tolerance applies to
    the Euclidean norm of the stacked free-DOF residual.
    """

    newton_abs_tol: float = 1e-10
    newton_max_iter: int = 25
    dt_min: float | None = None

    def __post_init__(self):
        if not self.newton_abs_tol > 0:
            raise ValueError("newton_abs_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be at least 1")


def apply_boundary_conditions(spaces: ProblemSpaces, params: MaterialParams, t: float) -> dict:
    """Dirichlet values of every constrained scalar DOF at pulling time t.

    SymX fixes u_X = 0, SymY fixes u_Y = 0; the clamp prescribes
    u_X = 0.5 AR (a^(1/4)(1+Mt) - 1) and u_Y = (a^(-1/4) - 1)(Y - 0.5).
    The director is (0, 1) and the multiplier (1-a)/sqrt(a) on all three
    Dirichlet sides, for every t; the free edge is unconstrained.

    Returns full-length value arrays per field, meaningful at the masked
    entries of each space.
    """
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    a = params.a
    ar = params.ar

    vals_u = np.zeros(spaces.u.n_dofs)
    coords = spaces.u.node_coords
    clamp_nodes = spaces.u.nodes_on(CLAMP)
    vals_u[spaces.u.nodes_on(SYMX) * 2] = 0.0
    vals_u[spaces.u.nodes_on(SYMY) * 2 + 1] = 0.0
    vals_u[clamp_nodes * 2] = 0.5 * ar * (a**0.25 * (1.0 + params.M * t) - 1.0)
    vals_u[clamp_nodes * 2 + 1] = (a**-0.25 - 1.0) * (coords[clamp_nodes, 1] - 0.5)

    vals_n = np.zeros(spaces.n.n_dofs)
    vals_lam = np.zeros(spaces.lam.n_dofs)
    lam0 = (1.0 - a) / np.sqrt(a)
    for tag in (SYMX, SYMY, CLAMP):
        nn = spaces.n.nodes_on(tag)
        vals_n[nn * 2] = 0.0
        vals_n[nn * 2 + 1] = 1.0
        vals_lam[spaces.lam.nodes_on(tag)] = lam0

    return {"u": vals_u, "n": vals_n, "lam": vals_lam}


def set_dirichlet(state: FieldState, spaces: ProblemSpaces, params: MaterialParams, t: float) -> FieldState:
    """Write the boundary values for time t into the state, in place."""
    values = apply_boundary_conditions(spaces, params, t)
    for name, vals in values.items():
        mask = spaces.space(name).dirichlet_mask
        getattr(state, name)[mask] = vals[mask]
    state.t = t
    return state


def initial_state(spaces: ProblemSpaces, params: MaterialParams) -> FieldState:
    """Nodal interpolation of the closed-form stress-free state.

    The displacement is affine and the remaining fields constant, so the
    interpolant is an exact discrete equilibrium at t = 0: continuation
    starts converged.
    """
    displacement, n0, p0, lam0 = stress_free_state(params)
    u = displacement(spaces.u.node_coords[:, 0], spaces.u.node_coords[:, 1]).reshape(-1)
    n = np.tile(n0, spaces.n.n_nodes)
    p = np.full(spaces.p.n_dofs, p0)
    lam = np.full(spaces.lam.n_dofs, lam0)
    state = FieldState(u=u, n=n, p=p, lam=lam, t=0.0)
    return set_dirichlet(state, spaces, params, 0.0)


@dataclass
class NewtonResult:
    state: FieldState
    iterations: int
    residual_norms: list[float]


def _scatter_update(state: FieldState, delta: np.ndarray, spaces: ProblemSpaces) -> None:
    indices, offsets, total = free_layout(spaces)
    for name in FIELDS:
        idx = indices[name]
        getattr(state, name)[idx] += delta[offsets[name] : offsets[name] + len(idx)]


def newton_solve(
    state0: FieldState,
    spaces: ProblemSpaces,
    params: MaterialParams,
    config: SolverConfig = SolverConfig(),
) -> NewtonResult:
    """Newton's method on the equilibrium equations at fixed t.

    The state must already carry the Dirichlet values of its t; the
    correction lives in the homogeneous space, so constrained entries never
    move.  Raises MaxIterationsError when the residual does not reach the
    tolerance and SingularFactorizationError when the factorization fails.
    """
    state = state0.copy()
    norms: list[float] = []
    for it in range(config.newton_max_iter + 1):
        residual = assemble_residual(state, params, spaces)
        rnorm = float(np.linalg.norm(residual))
        norms.append(rnorm)
        if not np.isfinite(rnorm):
            raise MaxIterationsError(f"residual diverged at iteration {it}")
        if rnorm <= config.newton_abs_tol:
            return NewtonResult(state=state, iterations=it, residual_norms=norms)
        if it == config.newton_max_iter:
            raise MaxIterationsError(
                f"no convergence in {config.newton_max_iter} iterations "
                f"(residual {rnorm:.3e} at t={state.t})"
            )
        jac = assemble_jacobian(state, params, spaces)
        try:
            lu = spla.splu(jac.tocsc())
        except RuntimeError as exc:  # SuperLU signals exact singularity this way
            raise SingularFactorizationError(str(exc)) from exc
        delta = lu.solve(-residual)
        if not np.all(np.isfinite(delta)):
            raise SingularFactorizationError("factorization produced non-finite correction")
        _scatter_update(state, delta, spaces)
    raise AssertionError("unreachable")


def nominal_stress(state: FieldState, spaces: ProblemSpaces, params: MaterialParams) -> float:
    """Nominal stress from the clamp reaction force.

    The residual is assembled without eliminating the clamp-edge u_X DOFs;
    the sum of those entries is the horizontal reaction of the quarter
    domain.  Doubling accounts for the lower half of the cross-section and
    the force is divided by the stress-free cross-section height a^(-1/4)
    (the stress-free state is the reference configuration for the
    stress-strain curve).
    """
    fields = assemble_residual_fields(state, params, spaces)
    clamp_ux = spaces.u.nodes_on(CLAMP) * 2
    force = float(np.sum(fields["u"][clamp_ux]))
    return 2.0 * force / params.a**-0.25


@dataclass
class TrajectoryStep:
    t: float
    state: FieldState
    nominal_stress: float
    energy: float


@dataclass
class Trajectory:
    """Accepted continuation steps, t strictly increasing from 0 to 1."""

    steps: list[TrajectoryStep] = field(default_factory=list)

    @property
    def t_values(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def stresses(self) -> np.ndarray:
        return np.array([s.nominal_stress for s in self.steps])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.steps])

    def strains(self, params: MaterialParams) -> np.ndarray:
        return params.M * self.t_values

    @property
    def final_state(self) -> FieldState:
        return self.steps[-1].state

    def nearest_step(self, t: float) -> TrajectoryStep:
        k = int(np.argmin(np.abs(self.t_values - t)))
        return self.steps[k]


def continuation_run(
    params: MaterialParams,
    config: SolverConfig,
    spaces: ProblemSpaces,
    on_step=None,
) -> Trajectory:
    """Pull from t = 0 to t = 1, reusing each converged state as the next
    initial guess.

    Steps that fail to converge are halved down to dt_min (default dt/16)
    before the run aborts with ContinuationFailedError; after a success the
    step grows back toward the nominal dt.
    """
    dt_nominal = params.dt
    dt_min = config.dt_min if config.dt_min is not None else dt_nominal / 16.0

    state = initial_state(spaces, params)
    result = newton_solve(state, spaces, params, config)
    state = result.state
    traj = Trajectory()

    def record(t, st):
        step = TrajectoryStep(
            t=t,
            state=st.copy(),
            nominal_stress=nominal_stress(st, spaces, params),
            energy=assemble_energy(st, params, spaces),
        )
        traj.steps.append(step)
        if on_step is not None:
            on_step(step)

    record(0.0, state)

    t = 0.0
    dt = dt_nominal
    while t < 1.0 - 1e-12:
        t_next = min(t + dt, 1.0)
        trial = state.copy()
        set_dirichlet(trial, spaces, params, t_next)
        try:
            result = newton_solve(trial, spaces, params, config)
        except (MaxIterationsError, SingularFactorizationError) as exc:
            dt *= 0.5
            if dt < dt_min * (1.0 - 1e-12):
                raise ContinuationFailedError(
                    f"step size fell below dt_min={dt_min} near t={t_next}: {exc}"
                ) from exc
            continue
        state = result.state
        t = t_next
        record(t, state)
        dt = min(dt * 2.0, dt_nominal)
    return traj


def write_trajectory(traj: Trajectory, params: MaterialParams, path) -> None:
    """CSV export with header t,strain,elongation,nominal_stress,energy."""
    with open(path, "w") as fh:
        fh.write("t,strain,elongation,nominal_stress,energy\n")
        for s in traj.steps:
            strain = params.M * s.t
            fh.write(
                f"{s.t:.10g},{strain:.10g},{1.0 + strain:.10g},"
                f"{s.nominal_stress:.12g},{s.energy:.12g}\n"
            )
