"""Independent checks for the robust safe-control program.

None of these routines touch the SDP. The inner worst case over the unit
ball is a trust-region subproblem solved exactly; the semi-infinite program
is solved a second way by cutting planes over worst-case points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .constraint import TildeConstraint
from .errors import ContractViolation, InfeasibleError, NonConvergenceError

__all__ = [
    "TrsResult",
    "CutSet",
    "CuttingPlaneResult",
    "solve_trs",
    "worst_case_z",
    "dual_lower_bound",
    "solve_nominal_qp",
    "nominal_qp_multipliers",
    "solve_robust_qp_cutting_plane",
    "sample_ball",
    "sample_verify",
]


@dataclass(frozen=True)
class TrsResult:
    z_star: np.ndarray
    value: float
    boundary: bool
    multiplier: float


def _sign_normalize(Q):
    """Flip eigenvector columns so their first nonzero entry is positive."""
    Q = Q.copy()
    for j in range(Q.shape[1]):
        col = Q[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            Q[:, j] = -col
    return Q


def _secular_root(w, beta2, lo, hi):
    """Root of ``1/|z(nu)| - 1`` on ``(lo, hi)`` where ``|z(nu)|^2 = sum beta2 / (4 (w + nu)^2)``.

    Newton on the reciprocal norm (close to linear in ``nu``), safeguarded
    by bisection on the bracket.
    """

    def phi(nu):
        s = np.sum(beta2 / (4.0 * (w + nu) ** 2))
        ds = -np.sum(beta2 / (2.0 * (w + nu) ** 3))
        return s**-0.5 - 1.0, -0.5 * s**-1.5 * ds

    nu = hi
    for _ in range(200):
        val, der = phi(nu)
        if val > 0:
            hi = nu
        else:
            lo = nu
        if abs(val) <= 1e-15 or hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
        step = nu - val / der if der > 0 else np.nan
        nu = step if lo < step < hi else 0.5 * (lo + hi)
    return nu


def solve_trs(A, b, c: float = 0.0) -> TrsResult:
    """Global minimum of ``z^T A z + b^T z + c`` over ``|z| <= 1``.

    Uses the eigendecomposition of ``A``. On the boundary the multiplier
    ``nu`` solves ``2 (A + nu I) z = -b`` with ``|z| = 1``; in the hard case
    (``b`` orthogonal to the bottom eigenspace) the bottom eigenvector fills
    the remaining norm. Ties are broken by a sign convention on eigenvectors.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    p = b.size
    if A.shape != (p, p):
        raise ContractViolation(f"A has shape {A.shape}, expected ({p}, {p})")
    scale_a = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * scale_a:
        raise ContractViolation("solve_trs needs a symmetric A")
    A = 0.5 * (A + A.T)
    c = float(c)

    w, Q = np.linalg.eigh(A)
    Q = _sign_normalize(Q)
    beta = Q.T @ b
    beta2 = beta**2
    scale = max(1.0, float(np.max(np.abs(w))), float(np.linalg.norm(b)))
    eig_tol = 1e-12 * scale
    bottom = w <= w[0] + eig_tol
    hard = float(np.sum(beta2[bottom])) <= (1e-13 * scale) ** 2

    def value(z):
        return float(z @ A @ z + b @ z + c)

    # interior: A PSD and the (pseudo-)stationary point lies in the ball
    if w[0] >= -eig_tol:
        null = w <= eig_tol
        if not np.any(null) or float(np.sum(beta2[null])) <= (1e-13 * scale) ** 2:
            coef = np.where(null, 0.0, -beta / (2.0 * np.where(null, 1.0, w)))
            z = Q @ coef
            if z @ z <= 1.0:
                return TrsResult(z, value(z), False, 0.0)

    nu_low = max(0.0, -float(w[0]))
    if hard and nu_low > 0.0 or (hard and w[0] >= -eig_tol and np.all(beta2 == 0.0)):
        rest = ~bottom
        denom = np.where(rest, w + nu_low, 1.0)
        coef = np.where(rest, -beta / (2.0 * denom), 0.0)
        zbar_norm2 = float(coef @ coef)
        if zbar_norm2 <= 1.0:
            coef[np.flatnonzero(bottom)[0]] = np.sqrt(1.0 - zbar_norm2)
            z = Q @ coef
            return TrsResult(z, value(z), True, nu_low)
        keep = rest
    else:
        keep = np.ones(p, dtype=bool)

    wk, b2k = w[keep], beta2[keep]
    hi = nu_low + 0.5 * float(np.sqrt(np.sum(b2k))) + 1.0
    nu = _secular_root(wk, b2k, nu_low, hi)
    coef = np.zeros(p)
    coef[keep] = -beta[keep] / (2.0 * (wk + nu))
    z = Q @ coef
    z = z / np.linalg.norm(z)
    return TrsResult(z, value(z), True, float(nu))


def worst_case_z(t: TildeConstraint, u) -> TrsResult:
    """Worst-case point of the unit ball for control ``u``; ``value`` is the robust margin."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (t.m,):
        raise ContractViolation(f"u has shape {u.shape}, expected ({t.m},)")
    return solve_trs(t.Ht, t.ft - t.Ct @ u, t.gt - t.dt @ u)


def dual_lower_bound(t: TildeConstraint, u, lam: float) -> float:
    """Lagrange dual function of the inner problem at multiplier ``lam``.

    ``-inf`` when ``Ht + lam I`` has a negative eigenvalue or the linear term
    leaves its range; otherwise the pseudo-inverse closed form.
    """
    lam = float(lam)
    if not lam >= 0:
        raise ContractViolation(f"dual multiplier must be nonnegative, got {lam}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    A = t.Ht + lam * np.eye(t.p)
    r = t.ft - t.Ct @ u
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    w, V = np.linalg.eigh(A)
    if w[0] < -1e-12 * scale:
        return -np.inf
    # pseudo-inverse and least-squares residual in the eigenbasis
    rc = V.T @ r
    kept = w > 1e-12 * scale
    if np.linalg.norm(rc[~kept]) > 1e-9:
        return -np.inf
    quad = float(np.sum(rc[kept] ** 2 / w[kept]))
    return float(-0.25 * quad + t.gt - t.dt @ u - lam)


# ---------------------------------------------------------------------------
# nominal QP: minimum-norm point of a polyhedron


def _as_rows(rows):
    rows = list(rows)
    if not rows:
        raise ContractViolation("nominal QP needs at least one constraint row")
    A = np.array([np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in rows])
    b = np.array([float(bi) for _, bi in rows])
    return A, b


def nominal_qp_multipliers(A, b, u):
    """Multipliers ``mu >= 0`` with ``2u + A^T mu = 0`` on the active rows of ``A u <= b``.

    Found by re-solving the problem restricted to the active rows, so
    degenerate active sets still yield nonnegative multipliers.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    act = np.flatnonzero(np.abs(A @ u - b) <= 1e-9 * (1.0 + np.abs(b)))
    mu = np.zeros(b.size)
    if act.size and np.any(u):
        _, mu_act = _dual_active_set(A[act], b[act])
        mu[act] = 2.0 * mu_act
    return mu


def solve_nominal_qp(rows) -> np.ndarray:
    """Minimum-norm ``u`` with ``a_i . u <= b_i`` for every row.

    One row has a closed form; more rows go through a dual active-set
    method, exact up to rounding once the active set is identified.
    """
    A, b = _as_rows(rows)
    k, m = A.shape
    if k == 1:
        a, bb = A[0], b[0]
        if bb >= 0:
            return np.zeros(m)
        aa = float(a @ a)
        if aa == 0.0:
            raise InfeasibleError("constraint 0 . u <= b with b < 0")
        return a * bb / aa

    u, _ = _dual_active_set(A, b)
    return u


def _dual_active_set(A, b, max_iter: int | None = None):
    """Dual active-set method for ``min |u|^2/2`` over ``A u <= b``.

    Starts at the unconstrained minimizer ``u = 0`` and adds the most violated
    row each pass, dropping rows whose multiplier would turn negative. Returns
    ``(u, mu)`` with ``u = -A^T mu``.
    """
    k, m = A.shape
    norms = np.linalg.norm(A, axis=1)
    scale = 1.0 + np.abs(b)
    u = np.zeros(m)
    mu = np.zeros(k)
    active: list[int] = []
    max_iter = max_iter or 50 * (k + m)
    for _ in range(max_iter):
        viol = (A @ u - b) / np.maximum(norms, 1e-300)
        viol[active] = -np.inf
        q = int(np.argmax(viol))
        if A[q] @ u - b[q] <= 1e-12 * scale[q]:
            return u, mu
        if norms[q] == 0.0:
            raise InfeasibleError(f"constraint 0 . u <= {b[q]:.3e} cannot hold")
        nq = A[q]
        while True:
            if active:
                N = A[active].T
                r = np.linalg.lstsq(N, nq, rcond=None)[0]
                z = nq - N @ r
            else:
                r = np.zeros(0)
                z = nq.copy()
            # step length that keeps active multipliers nonnegative
            t1, drop = np.inf, -1
            for j, rj in enumerate(r):
                if rj > 0 and mu[active[j]] / rj < t1:
                    t1, drop = mu[active[j]] / rj, j
            zn = float(z @ z)
            if zn <= (1e-12 * norms[q]) ** 2:
                if drop < 0:
                    raise InfeasibleError("cut set has no feasible point")
                t = t1
            else:
                t2 = float(A[q] @ u - b[q]) / zn
                t = min(t1, t2)
                u = u - t * z
            for j, i in enumerate(active):
                mu[i] -= t * r[j]
            mu[q] += t
            if t1 < np.inf and t == t1:
                mu[active[drop]] = 0.0
                del active[drop]
                continue
            active.append(q)
            break
    raise NonConvergenceError("active-set QP did not terminate")


# ---------------------------------------------------------------------------
# cutting planes


@dataclass
class CutSet:
    rows: list = field(default_factory=list)
    points: list = field(default_factory=list)

    def add(self, t: TildeConstraint, z) -> None:
        z = np.asarray(z, dtype=float)
        a = t.Ct.T @ z + t.dt
        b = float(z @ t.Ht @ z + t.ft @ z + t.gt)
        self.rows.append((a, b))
        self.points.append(z.copy())

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class CuttingPlaneResult:
    u: np.ndarray
    cuts: CutSet
    margin: float
    norms: tuple  # |u| after each nominal solve, starting at u = 0

    def __iter__(self):
        return iter((self.u, self.cuts))


def solve_robust_qp_cutting_plane(t: TildeConstraint, tol: float = 1e-10, max_cuts: int = 64) -> CuttingPlaneResult:
    """Solve the semi-infinite program by adding the worst-case cut until its margin is >= -tol.

    Raises :class:`InfeasibleError` when the cut set becomes empty and
    :class:`NonConvergenceError` past ``max_cuts``.
    """
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    cuts = CutSet()
    u = np.zeros(t.m)
    norms = [0.0]
    while True:
        wc = worst_case_z(t, u)
        if wc.value >= -tol:
            return CuttingPlaneResult(u, cuts, wc.value, tuple(norms))
        if len(cuts) >= max_cuts:
            raise NonConvergenceError(f"no robustly feasible point after {max_cuts} cuts (margin {wc.value:.3e})")
        cuts.add(t, wc.z_star)
        u = solve_nominal_qp(cuts.rows)
        norms.append(float(np.linalg.norm(u)))


# ---------------------------------------------------------------------------
# sampling


def sample_ball(count: int, p: int, seed: int) -> np.ndarray:
    """``count`` points uniform in the unit ball of R^p: Gaussian directions, radius ``U^(1/p)``."""
    if count < 1:
        raise ContractViolation("count must be at least 1")
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, p))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / p)
    return d * r[:, None]


def sample_verify(t: TildeConstraint, u, count: int = 10_000, seed: int = 0) -> float:
    """Smallest constraint residual over ``count`` seeded uniform samples of the unit ball."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    Z = sample_ball(count, t.p, seed)
    val, _ = K.min_quadratic_over_points(Z, t.Ht, t.ft - t.Ct @ u, float(t.gt - t.dt @ u))
    return float(val)
