"""Shared fixtures: space bundles and cached continuation runs.

Full continuation runs are expensive (up to minutes on the finest ladder
mesh), so their outcomes are cached on disk under ``tests/_cache`` keyed by
mesh level.  The cache stores the stress/energy curves, the final state and
the state closest to elongation 1.10; deleting the directory forces fresh
runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pytest

import lcefem as lc
from lcefem.spaces import FieldState

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_cache")
CACHE_TAG = "v1-default-params"


@pytest.fixture(scope="session")
def paper_params():
    return lc.MaterialParams()


@pytest.fixture(scope="session")
def spaces_factory(paper_params):
    cache = {}

    def build(k: int, ar: float | None = None):
        ar = paper_params.ar if ar is None else ar
        key = (k, ar)
        if key not in cache:
            mesh = lc.build_uniform_mesh(lc.MeshParams(h=2.0**-k, ar=ar))
            cache[key] = lc.build_problem_spaces(mesh)
        return cache[key]

    return build


@dataclass
class RunSummary:
    t: np.ndarray
    stress: np.ndarray
    energy: np.ndarray
    final: FieldState
    at_s110: FieldState

    @property
    def final_trajectory(self) -> lc.Trajectory:
        from lcefem.solver import TrajectoryStep

        return lc.Trajectory(
            steps=[TrajectoryStep(t=self.final.t, state=self.final, nominal_stress=self.stress[-1], energy=self.energy[-1])]
        )


def _state_to_dict(prefix: str, state: FieldState) -> dict:
    return {
        f"{prefix}_u": state.u,
        f"{prefix}_n": state.n,
        f"{prefix}_p": state.p,
        f"{prefix}_lam": state.lam,
        f"{prefix}_t": np.array(state.t),
    }


def _state_from_dict(prefix: str, data) -> FieldState:
    return FieldState(
        u=data[f"{prefix}_u"],
        n=data[f"{prefix}_n"],
        p=data[f"{prefix}_p"],
        lam=data[f"{prefix}_lam"],
        t=float(data[f"{prefix}_t"]),
    )


@pytest.fixture(scope="session")
def run_factory(paper_params, spaces_factory):
    """Continuation run at the default parameters on mesh 2**-k, cached."""
    os.makedirs(CACHE_DIR, exist_ok=True)
    memory = {}

    def run(k: int) -> RunSummary:
        if k in memory:
            return memory[k]
        path = os.path.join(CACHE_DIR, f"{CACHE_TAG}-h{k}.npz")
        if os.path.exists(path):
            data = np.load(path)
            summary = RunSummary(
                t=data["t"],
                stress=data["stress"],
                energy=data["energy"],
                final=_state_from_dict("final", data),
                at_s110=_state_from_dict("s110", data),
            )
        else:
            spaces = spaces_factory(k)
            traj = lc.continuation_run(paper_params, lc.SolverConfig(), spaces)
            t110 = 0.10 / paper_params.M
            summary = RunSummary(
                t=traj.t_values,
                stress=traj.stresses,
                energy=traj.energies,
                final=traj.final_state,
                at_s110=traj.nearest_step(t110).state,
            )
            np.savez(
                path,
                t=summary.t,
                stress=summary.stress,
                energy=summary.energy,
                **_state_to_dict("final", summary.final),
                **_state_to_dict("s110", summary.at_s110),
            )
        memory[k] = summary
        return summary

    return run
