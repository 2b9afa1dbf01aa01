"""Closed-form nematic elastomer energy and its structural properties.

Mesh-free evaluation of the trace-form stored energy coupling the
deformation gradient F and the unit director n, in 2D and 3D, together
with the analytic facts the solver relies on: the zero set of the energy,
the one-parameter shear families of zero-energy deformations, a
non-convexity witness, the stress-free state of the pulling experiment,
and the first Piola-Kirchhoff stress.

The shear-modulus and coupling prefactors are normalized to 1 by the
nondimensionalization of the problem; the anisotropy parameter ``a`` in
(0, 1) is the only material constant entering these formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class MaterialParams:
    """Material and experiment constants.

    ``a``: anisotropy parameter in (0, 1); ``b``: nondimensional director
    elasticity coefficient; ``ar_n``: aspect ratio of the stress-free
    configuration; ``M``: maximal extra elongation imposed by the clamps;
    ``dt``: continuation step; ``f``/``g``: body force and traction on the
    free edge (default zero).
    """

    a: float = 0.6
    b: float = 0.0015
    ar_n: float = 1.0
    M: float = 0.4
    dt: float = 0.01
    f: tuple[float, float] = (0.0, 0.0)
    g: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if not self.ar_n > 0:
            raise ValueError(f"ar_n must be positive, got {self.ar_n}")
        if self.M < 0:
            raise ValueError(f"M must be nonnegative, got {self.M}")
        if not 0 < self.dt <= 1:
            raise ValueError(f"dt must lie in (0, 1], got {self.dt}")

    @property
    def ar(self) -> float:
        """Reference-configuration aspect ratio, ar_n / sqrt(a)."""
        return self.ar_n / np.sqrt(self.a)


def _energy_offset(a: float, dim: int) -> float:
    """Constant making the minimal energy zero: 2 sqrt(a) in 2D, 3 a^(1/3) in 3D."""
    return 2.0 * np.sqrt(a) if dim == 2 else 3.0 * a ** (1.0 / 3.0)


def btw_energy(F: np.ndarray, n: np.ndarray, a: float, dim: int = 2) -> float:
    """Stored energy density |F|^2 - (1-a)|F^T n|^2 minus its minimal value.

    Requires |n| = 1; nonnegative for every F (and exactly zero on the set
    characterized by :func:`min_over_director`).
    """
    F = np.asarray(F, dtype=float)
    n = np.asarray(n, dtype=float)
    if F.shape != (dim, dim) or n.shape != (dim,):
        raise ValueError(f"expected {dim}x{dim} matrix and {dim}-vector")
    if abs(np.dot(n, n) - 1.0) > 1e-12:
        raise ValueError("director must be a unit vector")
    Ftn = F.T @ n
    return float(np.sum(F * F) - (1.0 - a) * np.dot(Ftn, Ftn) - _energy_offset(a, dim))


def min_over_director(F: np.ndarray, a: float, dim: int = 2) -> tuple[float, np.ndarray]:
    """Minimum of the energy over unit directors, and a minimizing director.

    With squared singular values s1 <= ... <= sd of F the minimum is
    s1 + a*s2 - 2 sqrt(a) in 2D and s1 + s2 + a*s3 - 3 a^(1/3) in 3D; it is
    attained at any unit eigenvector of F F^T for the largest eigenvalue.
    For degenerate top eigenvalues an arbitrary but deterministic
    eigenvector is returned.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix")
    if abs(np.linalg.det(F)) < 1e-14:
        raise ValueError("singular deformation gradient")
    w, v = np.linalg.eigh(F @ F.T)
    value = np.sum(w[:-1]) + a * w[-1] - _energy_offset(a, dim)
    return float(value), v[:, -1]


def shear_family(t: float, a: float, sign: int = 1, dim: int = 2) -> np.ndarray:
    """Zero-energy sheared deformation at parameter t in [0, 1].

    In 2D, with lam(t) = a^(1/4)(1-t) + a^(-1/4) t,

        F = [[lam, +-delta], [0, 1/lam]],
        delta = sqrt(a^(1/2) + a^(-1/2) - lam^2 - lam^(-2));

    in 3D, with lam(t) = a^(1/6)(1-t) + a^(-1/3) t,

        F = diag(a^(1/6), lam, a^(-1/6)/lam) with +-delta in the (1,2) slot,
        delta = sqrt(a^(1/3) + a^(-2/3) - lam^2 - a^(-1/3)/lam^2).

    det F = 1 and min_over_director(F) = 0 for every t.  The square-root
    argument is clamped to zero when it is floating-point negative at the
    endpoints; arguments below -1e-12 signal invalid t or a.
    """
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if dim == 2:
        lam = a ** 0.25 * (1 - t) + a ** -0.25 * t
        arg = np.sqrt(a) + 1 / np.sqrt(a) - lam**2 - lam**-2
    elif dim == 3:
        lam = a ** (1 / 6) * (1 - t) + a ** (-1 / 3) * t
        arg = a ** (1 / 3) + a ** (-2 / 3) - lam**2 - a ** (-1 / 3) / lam**2
    else:
        raise ValueError("dim must be 2 or 3")
    if arg < -1e-12:
        raise ValueError(f"square-root argument {arg} is negative; invalid t or a")
    delta = np.sqrt(max(arg, 0.0))
    if dim == 2:
        return np.array([[lam, sign * delta], [0.0, 1.0 / lam]])
    return np.array(
        [
            [a ** (1 / 6), 0.0, 0.0],
            [0.0, lam, sign * delta],
            [0.0, 0.0, a ** (-1 / 6) / lam],
        ]
    )


def nonconvexity_witness(a: float, t: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Two zero-energy shears whose midpoint has strictly positive energy.

    Returns (F_plus, F_minus, energy at the midpoint 0.5 F_plus + 0.5 F_minus);
    the endpoints have zero energy while the midpoint is the unsheared
    diag(lam, 1/lam), strictly positive for 0 < t < 1.
    """
    if not 0 < t < 1:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    f_plus = shear_family(t, a, sign=1)
    f_minus = shear_family(t, a, sign=-1)
    mid, _ = min_over_director(0.5 * f_plus + 0.5 * f_minus, a)
    return f_plus, f_minus, mid


def piola_stress(F: np.ndarray, n: np.ndarray, p: float, a: float) -> np.ndarray:
    """First Piola-Kirchhoff stress 2 (I - (1-a) n n^T) F - p cof(F)."""
    F = np.asarray(F, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.dot(n, n) - 1.0) > 1e-12:
        raise ValueError("director must be a unit vector")
    cof = np.array([[F[1, 1], -F[1, 0]], [-F[0, 1], F[0, 0]]])
    return 2.0 * (np.eye(2) - (1.0 - a) * np.outer(n, n)) @ F - p * cof


def stress_free_state(
    params: MaterialParams,
) -> tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray, float, float]:
    """Closed-form stress-free fields of the pulling experiment.

    Returns ``(u, n0, p0, lambda0)`` where ``u(X, Y)`` evaluates the
    displacement

        u_X = (a^(1/4) - 1)(X - 0.5 AR),   u_Y = (a^(-1/4) - 1)(Y - 0.5),

    so F = diag(a^(1/4), a^(-1/4)); the director is (0, 1), the pressure
    2 sqrt(a) and the multiplier (1-a)/sqrt(a).  The Piola-Kirchhoff stress
    vanishes identically at this state.
    """
    a = params.a
    ar = params.ar
    cx = a ** 0.25 - 1.0
    cy = a ** -0.25 - 1.0

    def displacement(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([cx * (x - 0.5 * ar), cy * (y - 0.5)], axis=-1)

    n0 = np.array([0.0, 1.0])
    p0 = 2.0 * np.sqrt(a)
    lambda0 = (1.0 - a) / np.sqrt(a)
    return displacement, n0, p0, lambda0


# --------------------------------------------------------------------------
# property suites
#
# These are the randomized verification suites behind the `verify-analytic`
# command: each returns (checked, failed, worst margin) where a positive
# margin means the inequality held with room to spare.


@dataclass
class SuiteResult:
    name: str
    checked: int
    failed: int
    worst: float

    @property
    def passed(self) -> bool:
        return self.failed == 0


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _zero_set_suite(a: float, dim: int, n_samples: int, rng) -> SuiteResult:
    """Forward and reverse check of the zero-set characterization.

    Nonnegativity and the zero set live on the incompressible matrices
    (det F = 1); the reverse samples draw random unit-determinant stretches
    whose squared singular values stay at least 1e-3 off the zero set.
    """
    if dim == 2:
        zero_diag = np.array([a ** 0.25, a ** -0.25])
    else:
        zero_diag = np.array([a ** (1 / 6), a ** (1 / 6), a ** (-1 / 3)])
    zero_eigs = np.sort(zero_diag**2)
    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        # forward: rotate the canonical zero-energy stretch; energy must vanish
        q1, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        q2, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        F = q1 @ np.diag(zero_diag) @ q2
        n = q1[:, -1]
        w = btw_energy(F, n, a, dim)
        worst = min(worst, 1e-10 - abs(w))
        if abs(w) > 1e-10:
            failed += 1
        # reverse: unit-determinant stretch off the zero set has positive minimum
        while True:
            stretch = np.exp(rng.uniform(-0.7, 0.7, size=dim))
            stretch /= np.prod(stretch) ** (1.0 / dim)
            if np.max(np.abs(np.sort(stretch**2) - zero_eigs)) > 1e-3:
                break
        F_off = q1 @ np.diag(stretch) @ q2
        w_min, _ = min_over_director(F_off, a, dim)
        if w_min <= 0:
            failed += 1
        worst = min(worst, w_min)
    return SuiteResult(f"zero-set {dim}D a={a}", n_samples, failed, worst)


def _shear_suite(a: float, dim: int, n_samples: int, rng) -> SuiteResult:
    """Zero energy and unit determinant along both shear families."""
    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        t = rng.uniform(0, 1)
        sign = 1 if rng.uniform() < 0.5 else -1
        F = shear_family(t, a, sign=sign, dim=dim)
        w, _ = min_over_director(F, a, dim)
        det_err = abs(np.linalg.det(F) - 1.0)
        margin = min(1e-10 - abs(w), 1e-12 - det_err)
        worst = min(worst, margin)
        if abs(w) > 1e-10 or det_err > 1e-12:
            failed += 1
    return SuiteResult(f"shear-family {dim}D a={a}", n_samples, failed, worst)


def _coercivity_suite(a: float, dim: int, n_samples: int, rng) -> SuiteResult:
    """|F|^2 - (1-a)|F^T n|^2 >= a |F|^2 for unit n."""
    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        F = rng.normal(size=(dim, dim))
        n = _random_unit(rng, dim)
        Ftn = F.T @ n
        lhs = np.sum(F * F) - (1 - a) * np.dot(Ftn, Ftn) - a * np.sum(F * F)
        worst = min(worst, lhs)
        if lhs < -1e-10:
            failed += 1
    return SuiteResult(f"coercivity {dim}D a={a}", n_samples, failed, worst)


def _convexity_suite(a: float, dim: int, n_samples: int, rng) -> SuiteResult:
    """Convexity in F of |F|^2 - (1-a)|F^T n|^2 at fixed unit n."""

    def L(F, n):
        Ftn = F.T @ n
        return np.sum(F * F) - (1 - a) * np.dot(Ftn, Ftn)

    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        F1 = rng.normal(size=(dim, dim))
        F2 = rng.normal(size=(dim, dim))
        alpha = rng.uniform(0, 1)
        n = _random_unit(rng, dim)
        gap = alpha * L(F1, n) + (1 - alpha) * L(F2, n) - L(alpha * F1 + (1 - alpha) * F2, n)
        worst = min(worst, gap)
        if gap < -1e-10:
            failed += 1
    return SuiteResult(f"convexity {dim}D a={a}", n_samples, failed, worst)


def _frame_indifference_suite(a: float, dim: int, n_samples: int, rng) -> SuiteResult:
    """W(R F, R n) = W(F, n) and W(F Q, n) = W(F, n) for rotations R, Q."""
    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        F = rng.normal(size=(dim, dim))
        n = _random_unit(rng, dim)
        R, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        w = btw_energy(F, n, a, dim)
        d1 = abs(btw_energy(R @ F, R @ n, a, dim) - w)
        d2 = abs(btw_energy(F @ Q, n, a, dim) - w)
        worst = min(worst, 1e-12 - max(d1, d2))
        if max(d1, d2) > 1e-12:
            failed += 1
    return SuiteResult(f"frame-indifference {dim}D a={a}", n_samples, failed, worst)


def _nonconvexity_suite(a: float, n_samples: int, rng) -> SuiteResult:
    """Midpoints of the shear families have strictly positive energy."""
    failed = 0
    worst = np.inf
    for _ in range(n_samples):
        t = rng.uniform(0.05, 0.95)
        f_plus, f_minus, mid = nonconvexity_witness(a, t)
        e_plus, _ = min_over_director(f_plus, a)
        e_minus, _ = min_over_director(f_minus, a)
        ok = mid > 1e-8 and abs(e_plus) < 1e-10 and abs(e_minus) < 1e-10
        worst = min(worst, mid - 1e-8)
        if not ok:
            failed += 1
    return SuiteResult(f"non-convexity a={a}", n_samples, failed, worst)


def _stress_free_suite(a: float, rng) -> SuiteResult:
    """Vanishing Piola-Kirchhoff stress at the closed-form state."""
    params = MaterialParams(a=a)
    _, n0, p0, _ = stress_free_state(params)
    F0 = np.diag([a ** 0.25, a ** -0.25])
    sigma = piola_stress(F0, n0, p0, a)
    worst = 1e-12 - np.max(np.abs(sigma))
    failed = 0 if np.max(np.abs(sigma)) <= 1e-12 else 1
    return SuiteResult(f"stress-free a={a}", 1, failed, worst)


def verify_propositions(
    a_values=(0.1, 0.3, 0.6, 0.9),
    n_samples: int = 10_000,
    seed: int = 0,
) -> list[SuiteResult]:
    """Run every analytic property suite over the given anisotropy values."""
    rng = np.random.default_rng(seed)
    results = []
    for a in a_values:
        for dim in (2, 3):
            results.append(_zero_set_suite(a, dim, n_samples, rng))
            results.append(_shear_suite(a, dim, n_samples, rng))
            results.append(_coercivity_suite(a, dim, n_samples, rng))
            results.append(_convexity_suite(a, dim, n_samples, rng))
            results.append(_frame_indifference_suite(a, dim, n_samples, rng))
        results.append(_nonconvexity_suite(a, n_samples, rng))
        results.append(_stress_free_suite(a, rng))
    return results
