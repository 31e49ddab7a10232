"""Second-order barrier constraint assembly and ball normalization.

With ``w = G^T grad_h`` and ``v = f^T grad_h`` we have ``hdot = w.theta + v``.
Enforcing ``hddot + alpha hdot + beta h >= 0`` gives the scalar inequality

    (C^T theta + d) . u <= theta^T H theta + fcoef . theta + g

that is affine in the robot control ``u``. Substituting
``theta = theta_hat + eta z`` with ``|z| <= 1`` yields the normalized form
stored in :class:`TildeConstraint`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .model import BarrierJet, ModelJet

__all__ = [
    "GainPair",
    "HDotData",
    "ConstraintData",
    "ParameterEstimate",
    "TildeConstraint",
    "assemble_hdot",
    "assemble_constraint",
    "normalize_constraint",
    "constraint_residual",
    "nominal_residual",
    "residual_matches_theta",
]


@dataclass(frozen=True)
class GainPair:
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ContractViolation("gains must be positive")
        if self.alpha**2 < 4 * self.beta:
            raise ContractViolation("gains need alpha^2 >= 4 beta (real characteristic roots)")

    @property
    def slow_rate(self) -> float:
        """Magnitude of the slower root of ``s^2 + alpha s + beta``."""
        disc = np.sqrt(max(self.alpha**2 - 4 * self.beta, 0.0))
        return 0.5 * (self.alpha - disc)


@dataclass(frozen=True)
class HDotData:
    w: np.ndarray
    v: float
    h: float
    hdot: float


@dataclass(frozen=True)
class ConstraintData:
    C: np.ndarray  # (p, m)
    d: np.ndarray  # (m,)
    H: np.ndarray  # (p, p), not necessarily symmetric
    fcoef: np.ndarray  # (p,)
    g: float

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        fcoef = np.atleast_1d(np.asarray(self.fcoef, dtype=float))
        p, m = C.shape
        if d.shape != (m,) or H.shape != (p, p) or fcoef.shape != (p,):
            raise ContractViolation(
                f"inconsistent constraint shapes C{C.shape} d{d.shape} H{H.shape} f{fcoef.shape}"
            )
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "fcoef", fcoef)
        object.__setattr__(self, "g", float(self.g))

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[1]


@dataclass(frozen=True)
class ParameterEstimate:
    theta_hat: np.ndarray
    eta: float

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        if th.ndim != 1 or not np.all(np.isfinite(th)):
            raise ContractViolation("theta_hat must be a finite vector")
        eta = float(self.eta)
        if not (eta >= 0 and np.isfinite(eta)):
            raise ContractViolation(f"eta must be finite and nonnegative, got {eta}")
        object.__setattr__(self, "theta_hat", th)
        object.__setattr__(self, "eta", eta)

    def contains(self, theta, slack: float = 1e-9) -> bool:
        return float(np.linalg.norm(np.asarray(theta, dtype=float) - self.theta_hat)) <= self.eta + slack


@dataclass(frozen=True)
class TildeConstraint:
    """Constraint over the unit ball: ``(Ct^T z + dt) . u <= z^T Ht z + ft . z + gt``."""

    Ct: np.ndarray  # (p, m)
    dt: np.ndarray  # (m,)
    Ht: np.ndarray  # (p, p) symmetric
    ft: np.ndarray  # (p,)
    gt: float

    def __post_init__(self):
        Ct = np.atleast_2d(np.asarray(self.Ct, dtype=float))
        dt = np.atleast_1d(np.asarray(self.dt, dtype=float))
        Ht = np.atleast_2d(np.asarray(self.Ht, dtype=float))
        ft = np.atleast_1d(np.asarray(self.ft, dtype=float))
        p, m = Ct.shape
        if dt.shape != (m,) or Ht.shape != (p, p) or ft.shape != (p,):
            raise ContractViolation(
                f"inconsistent tilde shapes Ct{Ct.shape} dt{dt.shape} Ht{Ht.shape} ft{ft.shape}"
            )
        if not np.array_equal(Ht, Ht.T):
            raise ContractViolation("Ht must be exactly symmetric")
        for name, arr in (("Ct", Ct), ("dt", dt), ("Ht", Ht), ("ft", ft)):
            if not np.all(np.isfinite(arr)):
                raise ContractViolation(f"{name} has non-finite entries")
        object.__setattr__(self, "Ct", Ct)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "Ht", Ht)
        object.__setattr__(self, "ft", ft)
        object.__setattr__(self, "gt", float(self.gt))

    @property
    def p(self) -> int:
        return self.Ct.shape[0]

    @property
    def m(self) -> int:
        return self.Ct.shape[1]


def _check_pair(jetM: ModelJet, jetB: BarrierJet):
    n = jetM.G.shape[0]
    if jetB.grad_h.shape != (n,):
        raise ContractViolation(f"barrier gradient length {jetB.grad_h.shape} does not match n={n}")


def assemble_hdot(jetM: ModelJet, jetB: BarrierJet, theta) -> HDotData:
    _check_pair(jetM, jetB)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (jetM.G.shape[1],):
        raise ContractViolation(f"theta has shape {theta.shape}, expected ({jetM.G.shape[1]},)")
    w = jetM.G.T @ jetB.grad_h
    v = float(jetM.f @ jetB.grad_h)
    return HDotData(w=w, v=v, h=float(jetB.h), hdot=float(w @ theta + v))


def _partials(jetM: ModelJet, jetB: BarrierJet):
    gh, Hh = jetB.grad_h, jetB.hess_h
    dw_dxA = np.einsum("ikj,i->kj", jetM.dG_dxA, gh) + jetM.G.T @ Hh
    dw_dxR = np.einsum("ikj,i->kj", jetM.dG_dxR, gh)
    dv_dxA = jetM.df_dxA.T @ gh + Hh @ jetM.f
    dv_dxR = jetM.df_dxR.T @ gh
    return dw_dxA, dw_dxR, dv_dxA, dv_dxR


def assemble_constraint(jetM: ModelJet, jetB: BarrierJet, gains: GainPair) -> ConstraintData:
    """Coefficients of ``hddot + alpha hdot + beta h >= 0`` as a constraint on ``u``.

    ``dw/dxA`` is ``p x n``; ``grad_h`` depends on ``xA`` only, so ``dw/dxR``
    carries no Hessian term.
    """
    _check_pair(jetM, jetB)
    G, f = jetM.G, jetM.f
    gh = jetB.grad_h
    w = G.T @ gh
    v = float(f @ gh)
    dw_dxA, dw_dxR, dv_dxA, dv_dxR = _partials(jetM, jetB)
    return ConstraintData(
        C=-dw_dxR,
        d=-dv_dxR,
        H=dw_dxA @ G,
        fcoef=dw_dxA @ f + G.T @ dv_dxA + gains.alpha * w,
        g=float(dv_dxA @ f) + gains.alpha * v + gains.beta * float(jetB.h),
    )


def normalize_constraint(c: ConstraintData, est: ParameterEstimate) -> TildeConstraint:
    """Rewrite the constraint over ``theta = theta_hat + eta z``, ``|z| <= 1``.

    The linear term uses ``(H + H^T) theta_hat``, the exact expansion for a
    non-symmetric ``H``; ``Ht`` is built from the symmetric part of ``H``.
    """
    th, eta = est.theta_hat, est.eta
    if th.shape != (c.p,):
        raise ContractViolation(f"theta_hat has shape {th.shape}, expected ({c.p},)")
    Hs = 0.5 * (c.H + c.H.T)
    return TildeConstraint(
        Ct=eta * c.C,
        dt=c.C.T @ th + c.d,
        Ht=eta**2 * Hs,
        ft=eta * c.fcoef + eta * ((c.H + c.H.T) @ th),
        gt=float(th @ c.H @ th + c.fcoef @ th + c.g),
    )


def constraint_residual(t: TildeConstraint, u, z) -> float:
    """Slack of the normalized constraint at ``(u, z)``; nonnegative means satisfied."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if u.shape != (t.m,) or z.shape != (t.p,):
        raise ContractViolation(f"u{u.shape}/z{z.shape} do not match m={t.m}, p={t.p}")
    return float(z @ t.Ht @ z + (t.ft - t.Ct @ u) @ z + t.gt - t.dt @ u)


def nominal_residual(c: ConstraintData, theta, u) -> float:
    """Slack of the un-normalized constraint at a fixed ``theta``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if theta.shape != (c.p,) or u.shape != (c.m,):
        raise ContractViolation(f"theta{theta.shape}/u{u.shape} do not match p={c.p}, m={c.m}")
    return float(theta @ c.H @ theta + c.fcoef @ theta + c.g - (c.C.T @ theta + c.d) @ u)


def residual_matches_theta(c: ConstraintData, est: ParameterEstimate, u, z) -> tuple[float, float]:
    """Return ``(tilde residual at z, raw residual at theta_hat + eta z)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    t = normalize_constraint(c, est)
    return constraint_residual(t, u, z), nominal_residual(c, est.theta_hat + est.eta * z, u)
