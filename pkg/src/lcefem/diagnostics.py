"""Saddle-point well-posedness diagnostics and mesh-ladder error study.

The discrete inf-sup value of a constraint form b(q, v) = q^T B v under
Gram matrices S (multiplier) and T (primal) is the smallest singular value
of S^(-1/2) B T^(-1/2).  Restricting the primal form to the constraint
kernel reduces, through the QR decomposition of (B T^(-1/2))^T, to a dense
corner block whose smallest singular value / eigenvalue give the inf-sup
and ellipticity constants of the restricted operator.

Everything here works on the free DOFs only, matching the test spaces of
the linearized problem, and uses dense spectral decompositions: the
diagnostics run offline on systems of at most a few thousand unknowns,
where robustness beats speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import SaddleMatrices, build_saddle_matrices
from .btw_core import MaterialParams
from .solver import Trajectory
from .spaces import DofMap, ProblemSpaces, field_norm, transfer_to_refined


def _dense(mat) -> np.ndarray:
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


def _inv_sqrt(gram: np.ndarray, name: str) -> np.ndarray:
    """Inverse symmetric square root via spectral decomposition."""
    w, v = np.linalg.eigh(gram)
    if w[0] <= 0:
        raise ValueError(f"{name} Gram matrix is not positive definite (min eig {w[0]:.3e})")
    return (v / np.sqrt(w)) @ v.T


def infsup_value(B, S, T) -> float:
    """Discrete inf-sup value of b(q, v) = q^T B v.

    S and T are the symmetric positive definite Gram matrices of the
    multiplier and primal norms; the value equals the smallest singular
    value of S^(-1/2) B T^(-1/2).  A zero value (up to roundoff) means B
    is not of full row rank.
    """
    b = _dense(B)
    g = _inv_sqrt(_dense(S), "multiplier") @ b @ _inv_sqrt(_dense(T), "primal")
    return float(scipy.linalg.svdvals(g)[-1])


def kernel_restricted(A, B, T) -> tuple[float, float]:
    """Inf-sup and ellipticity constants of a symmetric form on Ker B.

    With Bt = B T^(-1/2) and (Bt)^T = Q [R; 0], the corner block A1 --
    the lower right (n-m) x (n-m) part of Q^T T^(-1/2) A T^(-1/2) Q --
    represents the form on the kernel in an orthonormal basis.  Returns
    (s, e): the smallest singular value and the smallest eigenvalue of A1
    (A1 is symmetrized before the decomposition; accumulated asymmetry is
    at roundoff level).  Raises if B is numerically rank deficient, with
    the numerical rank in the message.
    """
    a = _dense(A)
    b = _dense(B)
    t_inv_half = _inv_sqrt(_dense(T), "primal")
    bt = b @ t_inv_half
    m, n = bt.shape
    q, r = scipy.linalg.qr(bt.T)
    rdiag = np.abs(np.diag(r[:m, :m]))
    tol = max(m, n) * np.finfo(float).eps * max(rdiag.max(), 1.0)
    rank = int(np.sum(rdiag > tol))
    if rank < m:
        raise ValueError(f"constraint matrix is rank deficient: numerical rank {rank} < {m}")
    at = t_inv_half @ a @ t_inv_half
    c = q.T @ at @ q
    a1 = c[m:, m:]
    a1 = 0.5 * (a1 + a1.T)
    w = np.linalg.eigvalsh(a1)
    s = float(np.min(np.abs(w)))
    e = float(w[0])
    return s, e


@dataclass(frozen=True)
class InfSupReport:
    """Inf-sup diagnostics of the linearized system at one state."""

    beta_b1: float
    beta_b2: float
    s_A_kerB: float
    e_A_kerB: float
    h: float
    t: float


def infsup_report(
    state,
    params: MaterialParams,
    spaces: ProblemSpaces,
    matrices: SaddleMatrices | None = None,
    multiplier_term: str = "omitted",
) -> InfSupReport:
    """Evaluate both constraint inf-sup values and the kernel-restricted
    constants of the summed primal form at the given state.

    The primal space for the kernel restriction is the product of the
    displacement and director spaces with norm ||v||_1^2 + ||m||_1^2; the
    stacked constraint pairs the pressure with b1 and the multiplier with b2.
    ``multiplier_term`` selects how the unit-director multiplier enters the
    director block of the restricted form: ``omitted`` (default) probes the
    unstabilized elastic response, whose ellipticity fails on the kernel at
    the pre-stretched state, while ``interpolated`` diagnoses exactly the
    solver's Newton block (which the multiplier term renders positive there);
    ``consistent`` uses the plain L2 multiplier pairing.
    """
    sm = matrices if matrices is not None else build_saddle_matrices(
        state, params, spaces, multiplier_term=multiplier_term
    )
    beta_b1 = infsup_value(sm.B1, sm.S_p, sm.T_u)
    beta_b2 = infsup_value(sm.B2, sm.S_lambda, sm.T_n)
    b_stack = sp.bmat(
        [[sm.B1, None], [None, sm.B2]], format="csr"
    )
    t_stack = sp.block_diag([sm.T_u, sm.T_n], format="csr")
    s, e = kernel_restricted(sm.A_primal, b_stack, t_stack)
    return InfSupReport(
        beta_b1=beta_b1,
        beta_b2=beta_b2,
        s_A_kerB=s,
        e_A_kerB=e,
        h=spaces.mesh.params.h,
        t=state.t,
    )


# --------------------------------------------------------------------------
# mesh-ladder errors


ERROR_LABELS = ("u_l2", "u_h1", "n_l2", "n_h1", "p_l2", "lam_hminus1")


@dataclass(frozen=True)
class ErrorRow:
    """Norms of the difference between the solutions on h and h/2."""

    h: float
    u_l2: float
    u_h1: float
    n_l2: float
    n_h1: float
    p_l2: float
    lam_hminus1: float

    def values(self) -> tuple[float, ...]:
        return (self.u_l2, self.u_h1, self.n_l2, self.n_h1, self.p_l2, self.lam_hminus1)


def hminus1_norm(space: DofMap, coeffs: np.ndarray, gram: np.ndarray | None = None) -> float:
    """Discrete H^{-1} norm of a multiplier-space function via A B^{-1} A.

    The function must vanish on the Dirichlet part (its free-DOF
    coefficients carry the whole norm).
    """
    from .assembly import assemble_gram

    s = gram if gram is not None else assemble_gram(space, "Hminus1")
    v = coeffs[space.free_dofs()]
    return float(np.sqrt(v @ s @ v))


def error_table(
    traj_coarse: Trajectory,
    spaces_coarse: ProblemSpaces,
    traj_fine: Trajectory,
    spaces_fine: ProblemSpaces,
) -> ErrorRow:
    """Error norms between the final states of two nested-trajectory runs.

    The coarse fields are transferred exactly to the fine mesh before
    subtracting; u and n are measured in L2 and full H1, p in L2 and the
    multiplier difference in the discrete H^{-1} norm.
    """
    sc, sf = traj_coarse.final_state, traj_fine.final_state

    def diff(name):
        coarse = transfer_to_refined(
            spaces_coarse.space(name), getattr(sc, name), spaces_fine.space(name)
        )
        return coarse - getattr(sf, name)

    du, dn, dp, dlam = diff("u"), diff("n"), diff("p"), diff("lam")
    return ErrorRow(
        h=spaces_coarse.mesh.params.h,
        u_l2=field_norm(spaces_fine.u, du, "L2"),
        u_h1=field_norm(spaces_fine.u, du, "H1"),
        n_l2=field_norm(spaces_fine.n, dn, "L2"),
        n_h1=field_norm(spaces_fine.n, dn, "H1"),
        p_l2=field_norm(spaces_fine.p, dp, "L2"),
        lam_hminus1=hminus1_norm(spaces_fine.lam, dlam),
    )


def convergence_rates(rows: list[ErrorRow]) -> list[dict]:
    """log2 ratios of successive ladder errors, one dict per refinement."""
    if len(rows) < 2:
        return []
    out = []
    for prev, cur in zip(rows[:-1], rows[1:]):
        rates = {}
        for label, e_prev, e_cur in zip(ERROR_LABELS, prev.values(), cur.values()):
            if e_cur == 0:
                raise ZeroDivisionError(f"zero error in row h={cur.h} for {label}")
            rates[label] = float(np.log2(e_prev / e_cur))
        out.append({"h": cur.h, **rates})
    return out
