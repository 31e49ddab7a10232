"""Dense log-det barrier path-following for tiny block-diagonal LMIs.

Problem form::

    minimize    c . x
    subject to  F(x) = F0 + sum_i x[i] * Fs[i]  >= 0   (PSD, N x N)

Every constraint of the safe-control program (the robust LMI, ``lambda >= 0``,
the epigraph block, the optional slack) is packed into one block-diagonal
``F``. The kernels are written in the subset of numpy that numba compiles, so
the same source runs on both backends; only the Cholesky helper differs.
"""
import numpy as np

from ._accel import USE_NUMBA, jit

STATUS_OPTIMAL = 0
STATUS_MAXITER = 1
STATUS_NUMERICAL = 2
STATUS_EARLY_STOP = 3

ARMIJO = 0.3
SHRINK = 0.5
# thresholds on half the squared Newton decrement
CENTER_TOL = 1e-9
FINAL_TOL = 1e-10
STALL_TOL = 1e-6
EPS = 2.220446049250313e-16
NOISE_FACTOR = 100.0


def _chol_loops(A):
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return False, L
        ljj = np.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / ljj
    return True, L


def _chol_numpy(A):
    try:
        return True, np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False, A


chol = jit(_chol_loops) if USE_NUMBA else _chol_numpy


@jit
def assemble(F0, Fs, x):
    F = F0.copy()
    for i in range(x.shape[0]):
        F += x[i] * Fs[i]
    return F


@jit
def logdet_or_nan(F0, Fs, x):
    """``log det F(x)``, or NaN when ``F(x)`` is not positive definite."""
    ok, L = chol(assemble(F0, Fs, x))
    if not ok:
        return np.nan
    s = 0.0
    for i in range(L.shape[0]):
        s += np.log(L[i, i])
    return 2.0 * s


@jit
def grad_hess(c, F0, Fs, x, mu):
    """Gradient and Hessian of ``mu c.x - log det F(x)``; ``ok`` is False outside the cone."""
    k = x.shape[0]
    ok, L = chol(assemble(F0, Fs, x))
    g = np.zeros(k)
    H = np.zeros((k, k))
    if not ok:
        return False, g, H
    Linv = np.linalg.inv(L)
    N = L.shape[0]
    W = np.empty((k, N, N))
    for i in range(k):
        W[i] = Linv @ Fs[i] @ Linv.T
    for i in range(k):
        tr = 0.0
        for a in range(N):
            tr += W[i, a, a]
        g[i] = mu * c[i] - tr
        for j in range(i + 1):
            v = np.sum(W[i] * W[j])
            H[i, j] = v
            H[j, i] = v
    return True, g, H


@jit
def newton_direction(g, H):
    """Solve ``H dx = -g`` by Cholesky of the diagonally scaled ``H``; NaNs if ``H`` is not PD."""
    k = g.shape[0]
    D = np.empty(k)
    for i in range(k):
        D[i] = 1.0 / np.sqrt(max(H[i, i], 1e-300))
    ok, L = chol(H * np.outer(D, D))
    dx = np.empty(k)
    if not ok:
        dx[:] = np.nan
        return dx
    rhs = -g * D
    y = np.empty(k)
    for i in range(k):
        v = rhs[i]
        for j in range(i):
            v -= L[i, j] * y[j]
        y[i] = v / L[i, i]
    for i in range(k - 1, -1, -1):
        v = y[i]
        for j in range(i + 1, k):
            v -= L[j, i] * dx[j]
        dx[i] = v / L[i, i]
    return dx * D


@jit
def auto_mu(c, F0, Fs, x):
    """Barrier weight that best centers ``x``: argmin over mu of the Newton-norm of ``mu c + grad phi``."""
    ok, g0, H = grad_hess(c, F0, Fs, x, 0.0)
    if not ok:
        return 1.0
    hc = -newton_direction(c, H)  # H^-1 c
    den = c @ hc
    if not (den > 0.0):
        return 1.0
    mu = -(g0 @ hc) / den
    if not (mu > 1e-8) or not np.isfinite(mu):
        return 1e-8 if np.isfinite(mu) else 1.0
    return mu


@jit
def kkt_residual(c, F0, Fs, x, mu, floor):
    """KKT residual of the Newton-corrected dual estimate at ``x``.

    With ``S = L^-1 (sum_i dx_i F_i) L^-T`` the dual matrix
    ``Z = L^-T (I - S) L^-1 / mu`` satisfies stationarity up to the linear
    solve error. Returns ``max(gap, |stationarity|, dual infeasibility)``
    relative to ``floor + |c . x|``.
    """
    k = x.shape[0]
    ok, L = chol(assemble(F0, Fs, x))
    if not ok:
        return np.inf
    ok, g, H = grad_hess(c, F0, Fs, x, mu)
    dx = newton_direction(g, H)
    Linv = np.linalg.inv(L)
    dF = np.zeros_like(F0)
    for i in range(k):
        dF += dx[i] * Fs[i]
    S = Linv @ dF @ Linv.T
    S = 0.5 * (S + S.T)
    N = F0.shape[0]
    gap = (N - np.trace(S)) / mu
    stat = np.abs(g + H @ dx).max() / mu
    smax = np.linalg.eigvalsh(S)[N - 1]
    dual_infeas = 0.0 if smax <= 1.0 else np.inf
    return max(abs(gap), stat, dual_infeas) / (floor + np.abs(c @ x))


@jit
def barrier_path(c, F0, Fs, x0, mu0, factor, tol, floor, max_iter, stop_index, stop_value):
    """Follow the central path from the strictly feasible ``x0``.

    Centering uses damped Newton with Armijo backtracking that never leaves
    the cone interior. ``mu`` grows by ``factor`` until the duality gap
    ``N / mu`` is at most ``tol * (floor + |c . x|) / 2``; ``mu0 <= 0`` picks
    the starting weight with :func:`auto_mu`. When ``stop_index >= 0`` the
    run returns as soon as ``x[stop_index] < stop_value`` (phase-I search).

    Returns ``(status, x, iterations, mu, kkt_residual)``.
    """
    x = x0.copy()
    N = F0.shape[0]
    mu = mu0 if mu0 > 0.0 else auto_mu(c, F0, Fs, x)
    mu = min(mu, 2.0 * N / (tol * (floor + np.abs(c @ x))))
    iters = 0
    ld = logdet_or_nan(F0, Fs, x)
    if np.isnan(ld):
        return STATUS_NUMERICAL, x, iters, mu, np.inf
    while True:
        target = 0.5 * tol * (floor + np.abs(c @ x))
        final = N / mu <= target * (1.0 + 1e-12)
        while True:
            ok, g, H = grad_hess(c, F0, Fs, x, mu)
            if not ok:
                return STATUS_NUMERICAL, x, iters, mu, np.inf
            dx = newton_direction(g, H)
            slope = g @ dx
            dec2 = -slope
            if not np.isfinite(dec2) or dec2 < -1e-12 * (1.0 + np.abs(g).max()):
                return STATUS_NUMERICAL, x, iters, mu, np.inf
            if dec2 * 0.5 <= (FINAL_TOL if final else CENTER_TOL):
                break
            # a predicted decrease under the merit's rounding level is as centered as it gets
            if dec2 * 0.5 <= NOISE_FACTOR * EPS * (mu * np.abs(c @ x) + np.abs(ld) + 1.0):
                break
            a = 1.0
            accepted = False
            while a > 1e-12:
                xn = x + a * dx
                ldn = logdet_or_nan(F0, Fs, xn)
                if not np.isnan(ldn):
                    # merit change from its parts; the full merit loses digits at large mu
                    df = mu * (c @ (xn - x)) - (ldn - ld)
                    if df <= ARMIJO * a * slope:
                        accepted = True
                        break
                a *= SHRINK
            if not accepted:
                if dec2 * 0.5 <= STALL_TOL:
                    break  # steps are below the resolution of x
                if final and kkt_residual(c, F0, Fs, x, mu, floor) <= tol:
                    break  # stuck at the rounding floor but already accurate
                return STATUS_NUMERICAL, x, iters, mu, np.inf
            if np.all(xn == x):
                break  # the step no longer changes x in floating point
            x = xn
            ld = ldn
            iters += 1
            if a < 1e-3 and dec2 * 0.5 <= STALL_TOL:
                break  # crawling at the rounding floor
            if stop_index >= 0 and x[stop_index] < stop_value:
                return STATUS_EARLY_STOP, x, iters, mu, np.inf
            if iters >= max_iter:
                return STATUS_MAXITER, x, iters, mu, np.inf
        if final:
            return STATUS_OPTIMAL, x, iters, mu, kkt_residual(c, F0, Fs, x, mu, floor)
        mu = min(mu * factor, N / (0.5 * tol * (floor + np.abs(c @ x))))


@jit
def min_quadratic_over_points(Z, A, b, c):
    """``min_k  Z[k] A Z[k] + b . Z[k] + c`` and its argmin row index."""
    vals = np.sum((Z @ A) * Z, axis=1) + Z @ b + c
    k = np.argmin(vals)
    return vals[k], k
