"""Robust LMI construction and the minimum-norm safe-control SDP.

For a normalized constraint the robust condition holds for every ``|z| <= 1``
iff there is ``lambda >= 0`` with

    M(u, lambda) = [[Ht + lambda I,   (ft - Ct u)/2      ],
                    [(ft - Ct u)^T/2,  gt - dt.u - lambda]]  >= 0.

The safe control is the minimum-norm ``u`` over that set, solved in epigraph
form ``min t`` s.t. ``M >= 0``, ``lambda >= 0``, ``[[I, u], [u^T, t]] >= 0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .constraint import TildeConstraint
from .errors import ContractViolation

__all__ = [
    "LmiBlock",
    "SLemmaPair",
    "SdpProblem",
    "SdpSolution",
    "SolveStatus",
    "SolverOptions",
    "build_robust_lmi",
    "build_slemma_pair",
    "solve_safe_control",
    "check_psd",
]


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAXITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    mu0: float | None = None  # None: chosen from the starting point
    mu_factor: float = 10.0
    phase1_margin: float = 1e-6
    phase1_radius: float = 1e6
    slack_mode: bool = False
    slack_weight: float = 1e6

    def __post_init__(self):
        if not self.tol > 0:
            raise ContractViolation("solver tol must be positive")
        if self.max_iter < 1:
            raise ContractViolation("solver max_iter must be at least 1")
        if not ((self.mu0 is None or self.mu0 > 0) and self.mu_factor > 1):
            raise ContractViolation("need mu0 > 0 and mu_factor > 1")
        if not (self.phase1_margin > 0 and self.phase1_radius > 0):
            raise ContractViolation("phase1_margin and phase1_radius must be positive")


@dataclass(frozen=True)
class LmiBlock:
    """Affine matrix ``M(u, lam) = constant + sum_i u_i coeff_u[i] + lam coeff_lambda``."""

    constant: np.ndarray
    coeff_u: np.ndarray  # (m, p+1, p+1)
    coeff_lambda: np.ndarray

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    @property
    def m(self) -> int:
        return self.coeff_u.shape[0]

    def M(self, u, lam) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.m,):
            raise ContractViolation(f"u has shape {u.shape}, expected ({self.m},)")
        out = self.constant.copy()
        for i in range(self.m):
            out += u[i] * self.coeff_u[i]
        out += float(lam) * self.coeff_lambda
        return out


def build_robust_lmi(t: TildeConstraint) -> LmiBlock:
    p, m = t.p, t.m
    constant = np.zeros((p + 1, p + 1))
    constant[:p, :p] = t.Ht
    constant[:p, p] = 0.5 * t.ft
    constant[p, :p] = 0.5 * t.ft
    constant[p, p] = t.gt
    coeff_u = np.zeros((m, p + 1, p + 1))
    for i in range(m):
        coeff_u[i, :p, p] = -0.5 * t.Ct[:, i]
        coeff_u[i, p, :p] = -0.5 * t.Ct[:, i]
        coeff_u[i, p, p] = -t.dt[i]
    coeff_lambda = np.eye(p + 1)
    coeff_lambda[p, p] = -1.0
    return LmiBlock(constant, coeff_u, coeff_lambda)


@dataclass(frozen=True)
class SLemmaPair:
    """``P = diag(-I, 1)`` encodes ``|z| <= 1``; ``Q(u)`` encodes the constraint at ``u``."""

    P: np.ndarray
    tilde: TildeConstraint

    def Q(self, u) -> np.ndarray:
        t = self.tilde
        p, m = t.p, t.m
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (m,):
            raise ContractViolation(f"u has shape {u.shape}, expected ({m},)")
        # accumulated in index order so this and LmiBlock.M round identically
        lin = t.ft.copy()
        corner = t.gt
        for i in range(m):
            lin = lin - u[i] * t.Ct[:, i]
            corner = corner - u[i] * t.dt[i]
        Q = np.empty((p + 1, p + 1))
        Q[:p, :p] = t.Ht
        Q[:p, p] = 0.5 * lin
        Q[p, :p] = 0.5 * lin
        Q[p, p] = corner
        return Q

    def shifted(self, u, lam) -> np.ndarray:
        """``Q(u) - lam P``."""
        return self.Q(u) - float(lam) * self.P


def build_slemma_pair(t: TildeConstraint) -> SLemmaPair:
    P = -np.eye(t.p + 1)
    P[t.p, t.p] = 1.0
    return SLemmaPair(P=P, tilde=t)


@dataclass(frozen=True)
class SdpProblem:
    lmi: LmiBlock
    m: int
    options: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class SdpSolution:
    u: np.ndarray
    lam: float
    t: float
    status: SolveStatus
    iterations: int
    kkt_residual: float
    phase1_value: float = float("nan")
    slack: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def check_psd(M, slack: float = 0.0) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * scale:
        raise ContractViolation("check_psd needs a symmetric matrix")
    return bool(np.linalg.eigvalsh(M)[0] >= -slack)


# ---------------------------------------------------------------------------
# packing into one block-diagonal LMI for the kernel


class _Packer:
    def __init__(self, sizes, nvar):
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        N = int(self.offsets[-1])
        self.F0 = np.zeros((N, N))
        self.Fs = np.zeros((nvar, N, N))

    def put(self, block, target, var=None):
        a, b = self.offsets[block], self.offsets[block + 1]
        if var is None:
            self.F0[a:b, a:b] += target
        else:
            self.Fs[var, a:b, a:b] += target


def _epigraph_blocks(pk, block, m, u_vars, t_var):
    base = np.zeros((m + 1, m + 1))
    base[:m, :m] = np.eye(m)
    pk.put(block, base)
    for i, var in enumerate(u_vars):
        E = np.zeros((m + 1, m + 1))
        E[i, m] = E[m, i] = 1.0
        pk.put(block, E, var)
    E = np.zeros((m + 1, m + 1))
    E[m, m] = 1.0
    pk.put(block, E, t_var)


def _run(c, pk, x0, opts, tol, stop_index=-1, stop_value=0.0, mu0=None, floor=1.0):
    if mu0 is None:
        mu0 = opts.mu0 or 0.0
    return K.barrier_path(
        np.ascontiguousarray(c, dtype=float),
        pk.F0,
        pk.Fs,
        np.ascontiguousarray(x0, dtype=float),
        float(mu0),
        float(opts.mu_factor),
        float(tol),
        float(floor),
        int(opts.max_iter),
        int(stop_index),
        float(stop_value),
    )


_STATUS = {
    K.STATUS_OPTIMAL: SolveStatus.OPTIMAL,
    K.STATUS_MAXITER: SolveStatus.MAXITER,
    K.STATUS_NUMERICAL: SolveStatus.NUMERICAL_FAILURE,
}


def _phase1(lmi: LmiBlock, opts: SolverOptions, with_u=True, radius=None):
    """Minimize ``s`` s.t. ``M(u, lam) + s I >= 0``, ``lam + s >= 0``, ``|u| <= radius``.

    The radius bound keeps the search bounded when some direction of ``u``
    leaves ``M`` unchanged. Returns ``(status, u, lam, s, iterations)``;
    ``status`` is ``STATUS_EARLY_STOP`` once a point with margin is found.
    """
    m = lmi.m if with_u else 0
    Kdim = lmi.size
    nvar = m + 2
    sizes = [Kdim, 1] + ([m + 1] if m else [])
    pk = _Packer(sizes, nvar)
    pk.put(0, lmi.constant)
    for i in range(m):
        pk.put(0, lmi.coeff_u[i], i)
    pk.put(0, lmi.coeff_lambda, m)
    pk.put(1, np.ones((1, 1)), m)
    pk.put(0, np.eye(Kdim), m + 1)
    pk.put(1, np.ones((1, 1)), m + 1)
    if m:
        R = radius or opts.phase1_radius
        ball = np.zeros((m + 1, m + 1))
        ball[:m, :m] = R * np.eye(m)
        ball[m, m] = R
        pk.put(2, ball)
        for i in range(m):
            E = np.zeros((m + 1, m + 1))
            E[i, m] = E[m, i] = 1.0
            pk.put(2, E, i)
    lam0 = max(0.0, -float(np.linalg.eigvalsh(lmi.constant)[0])) + 1.0
    start = lmi.constant + lam0 * lmi.coeff_lambda
    s0 = max(-float(np.linalg.eigvalsh(start)[0]), -lam0, 0.0) + 1.0
    x0 = np.zeros(nvar)
    x0[m] = lam0
    x0[m + 1] = s0
    c = np.zeros(nvar)
    c[m + 1] = 1.0
    if with_u:
        code, x, it, _, _ = _run(c, pk, x0, opts, opts.phase1_margin * 0.1, m + 1, -opts.phase1_margin)
    else:
        code, x, it, _, _ = _run(c, pk, x0, opts, min(opts.tol, 1e-10))
    return code, x[:m], x[m], x[m + 1], it


def _degenerate(lmi: LmiBlock, m: int, opts: SolverOptions) -> SdpSolution:
    # u does not enter M: u = 0 is optimal whenever some lambda works
    code, _, lam, s, it = _phase1(lmi, opts, with_u=False)
    u = np.zeros(m)
    if code != K.STATUS_OPTIMAL:
        return SdpSolution(u, lam, 0.0, _STATUS[code], it, np.inf, s)
    if s > opts.tol:
        return SdpSolution(u, lam, 0.0, SolveStatus.INFEASIBLE, it, np.inf, s)
    return SdpSolution(u, max(lam, 0.0), 0.0, SolveStatus.OPTIMAL, it, max(s, 0.0), s)


def _solve_packed(lmi: LmiBlock, opts: SolverOptions, u0, lam0, iters0, phase1_value, floor=1.0):
    m, Kdim = lmi.m, lmi.size
    slack = opts.slack_mode
    nvar = m + 2 + (1 if slack else 0)
    sizes = [Kdim, 1, m + 1] + ([1] if slack else [])
    pk = _Packer(sizes, nvar)
    pk.put(0, lmi.constant)
    for i in range(m):
        pk.put(0, lmi.coeff_u[i], i)
    pk.put(0, lmi.coeff_lambda, m)
    pk.put(1, np.ones((1, 1)), m)
    _epigraph_blocks(pk, 2, m, range(m), m + 1)
    c = np.zeros(nvar)
    c[m + 1] = 1.0
    x0 = np.zeros(nvar)
    x0[:m] = u0
    x0[m] = lam0
    x0[m + 1] = float(u0 @ u0) + 1.0
    if slack:
        r = m + 2
        corner = np.zeros((Kdim, Kdim))
        corner[-1, -1] = 1.0
        pk.put(0, corner, r)
        pk.put(3, np.ones((1, 1)), r)
        c[r] = opts.slack_weight
        Mx = lmi.M(u0, lam0)
        A, b, d = Mx[:-1, :-1], Mx[:-1, -1], Mx[-1, -1]
        schur = d - (b @ np.linalg.solve(A, b) if Kdim > 1 else 0.0)
        x0[r] = max(0.0, -schur) + 1.0
    code, x, it, _, kkt = _run(c, pk, x0, opts, opts.tol, floor=floor)
    u = x[:m].copy()
    sol = SdpSolution(
        u=u,
        lam=float(x[m]),
        t=float(x[m + 1]),
        status=_STATUS[code],
        iterations=iters0 + it,
        kkt_residual=float(kkt),
        phase1_value=phase1_value,
        slack=float(x[m + 2]) if slack else 0.0,
    )
    if sol.optimal and not _solution_consistent(lmi, sol, opts):
        return replace(sol, status=SolveStatus.NUMERICAL_FAILURE)
    return sol


def _solution_consistent(lmi, sol, opts) -> bool:
    M = lmi.M(sol.u, sol.lam)
    if opts.slack_mode:
        M[-1, -1] += sol.slack
    return (
        sol.lam >= -1e-9
        and np.linalg.eigvalsh(M)[0] >= -1e-8
        and sol.t >= float(sol.u @ sol.u) - 1e-8
        and sol.kkt_residual <= opts.tol
    )


def solve_safe_control(t: TildeConstraint, opts: SolverOptions | None = None) -> SdpSolution:
    """Minimum-norm ``u`` whose constraint holds for every ``|z| <= 1``.

    Without slack mode an empty LMI interior (checked by a phase-I search
    with margin ``opts.phase1_margin``) is reported as ``Infeasible``; the
    phase-I optimum is returned in ``phase1_value``.
    """
    opts = opts or SolverOptions()
    scale, sigma = _equilibration(t)
    scaled = TildeConstraint(
        Ct=t.Ct * (sigma / scale),
        dt=t.dt * (sigma / scale),
        Ht=t.Ht / scale,
        ft=t.ft / scale,
        gt=t.gt / scale,
    )
    if opts.slack_mode:
        opts = replace(opts, slack_weight=opts.slack_weight * scale / sigma**2)
    # gap and KKT residual are measured relative to 1 + |t| in the original units
    sol = _solve_core(scaled, opts, 1.0 / sigma**2)
    return replace(
        sol,
        u=sol.u * sigma,
        lam=sol.lam * scale,
        t=sol.t * sigma**2,
        phase1_value=sol.phase1_value * scale,
        slack=sol.slack * scale,
    )


def _pow2(x: float) -> float:
    return float(np.ldexp(1.0, int(np.clip(np.round(np.log2(x)), -60, 60))))


def _equilibration(t: TildeConstraint) -> tuple[float, float]:
    """Power-of-two factors ``(scale, sigma)`` for ``M / scale`` and ``u = sigma v``.

    Powers of two keep the rescaled data exact, so the solve sees the same
    instance in better units.
    """
    data = max(np.abs(t.Ht).max(initial=0.0), np.abs(t.ft).max(initial=0.0), abs(t.gt))
    ctrl = max(np.abs(t.Ct).max(initial=0.0), np.abs(t.dt).max(initial=0.0))
    scale = _pow2(data) if data > 0 else 1.0
    sigma = _pow2(scale / ctrl) if ctrl > 0 else 1.0
    return scale, sigma


def _solve_core(t: TildeConstraint, opts: SolverOptions, floor: float = 1.0) -> SdpSolution:
    lmi = build_robust_lmi(t)
    m = t.m
    if not opts.slack_mode and not np.any(t.Ct) and not np.any(t.dt):
        return _degenerate(lmi, m, opts)

    hmin = float(np.linalg.eigvalsh(t.Ht)[0])
    lam0 = max(1.0, 1.1 * max(0.0, -hmin))
    u0 = np.zeros(m)
    if opts.slack_mode or K.chol(np.ascontiguousarray(lmi.M(u0, lam0)))[0]:
        return _solve_packed(lmi, opts, u0, lam0, 0, float("nan"), floor)

    # grow the search ball so a far-away phase-I exit only happens when needed
    it_total = 0
    radius = min(10.0, opts.phase1_radius)
    while True:
        code, u0, lam0, s, it = _phase1(lmi, opts, radius=radius)
        it_total += it
        if code == K.STATUS_EARLY_STOP:
            return _solve_packed(lmi, opts, u0, lam0, it_total, s, floor)
        if code != K.STATUS_OPTIMAL:
            return SdpSolution(u0, lam0, float(u0 @ u0), _STATUS[code], it_total, np.inf, s)
        if radius >= opts.phase1_radius:
            # converged without finding margin: no strictly feasible point
            return SdpSolution(u0, lam0, float(u0 @ u0), SolveStatus.INFEASIBLE, it_total, np.inf, s)
        radius = min(radius * 100.0, opts.phase1_radius)
