"""Parameter-affine human dynamics and barrier functions with exact jets.

The human moves as ``xA_dot = G(xA, xR) @ theta + f(xA, xR)`` and the safe set
is ``{xA : h(xA) >= 0}``. Everything downstream needs first derivatives of
``G`` and ``f`` and the Hessian of ``h``, so every evaluator returns the full
jet rather than bare values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation

__all__ = [
    "AgentState",
    "ModelJet",
    "BarrierJet",
    "ScenarioModel",
    "ValidationReport",
    "eval_model_jet",
    "eval_barrier_jet",
    "check_jets_fd",
    "make_dynamics",
    "make_barrier",
    "make_scenario_model",
    "MODEL_NAMES",
    "BARRIER_NAMES",
]


def _vec(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise ContractViolation(f"{name} must be a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class AgentState:
    xA: np.ndarray
    xR: np.ndarray

    def __post_init__(self):
        xA = _vec(self.xA, "xA")
        xR = _vec(self.xR, "xR")
        if xA.shape != xR.shape or xA.size < 1:
            raise ContractViolation(f"xA and xR dimensions differ: {xA.shape} vs {xR.shape}")
        if not (np.all(np.isfinite(xA)) and np.all(np.isfinite(xR))):
            raise ContractViolation("state has non-finite entries")
        object.__setattr__(self, "xA", xA)
        object.__setattr__(self, "xR", xR)

    @property
    def n(self) -> int:
        return self.xA.size


@dataclass(frozen=True)
class ModelJet:
    """``G`` (n, p), ``f`` (n,) and their partials.

    ``dG_dxA[i, k, j]`` is ``d G[i, k] / d xA[j]``; ``df_dxA[i, j]`` is
    ``d f[i] / d xA[j]``. Same layout for the ``xR`` blocks.
    """

    G: np.ndarray
    f: np.ndarray
    dG_dxA: np.ndarray
    dG_dxR: np.ndarray
    df_dxA: np.ndarray
    df_dxR: np.ndarray

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def p(self) -> int:
        return self.G.shape[1]

    def validate(self, n: int, p: int) -> None:
        shapes = {
            "G": (n, p),
            "f": (n,),
            "dG_dxA": (n, p, n),
            "dG_dxR": (n, p, n),
            "df_dxA": (n, n),
            "df_dxR": (n, n),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ContractViolation(f"ModelJet.{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ContractViolation(f"ModelJet.{name} has non-finite entries")


@dataclass(frozen=True)
class BarrierJet:
    h: float
    grad_h: np.ndarray
    hess_h: np.ndarray

    def validate(self, n: int) -> None:
        if self.grad_h.shape != (n,) or self.hess_h.shape != (n, n):
            raise ContractViolation(
                f"BarrierJet shapes {self.grad_h.shape}/{self.hess_h.shape} do not match n={n}"
            )
        if not (np.isfinite(self.h) and np.all(np.isfinite(self.grad_h)) and np.all(np.isfinite(self.hess_h))):
            raise ContractViolation("BarrierJet has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(self.hess_h))))
        if np.max(np.abs(self.hess_h - self.hess_h.T)) > 1e-12 * scale:
            raise ContractViolation("barrier Hessian is not symmetric")


@dataclass(frozen=True)
class ScenarioModel:
    """Dynamics and barrier evaluators for one human-robot scenario.

    ``model_fn(xA, xR) -> ModelJet`` and ``barrier_fn(xA) -> BarrierJet`` must
    be pure functions.
    """

    n: int
    p: int
    model_fn: Callable[[np.ndarray, np.ndarray], ModelJet]
    barrier_fn: Callable[[np.ndarray], BarrierJet]
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)


def eval_model_jet(model: ScenarioModel, s: AgentState) -> ModelJet:
    if s.n != model.n:
        raise ContractViolation(f"state dimension {s.n} does not match model dimension {model.n}")
    jet = model.model_fn(s.xA, s.xR)
    jet.validate(model.n, model.p)
    return jet


def eval_barrier_jet(model: ScenarioModel, xA) -> BarrierJet:
    xA = _vec(xA, "xA")
    if xA.size != model.n:
        raise ContractViolation(f"xA has length {xA.size}, model expects {model.n}")
    jet = model.barrier_fn(xA)
    jet.validate(model.n)
    return jet


# ---------------------------------------------------------------------------
# built-in dynamics


def _linear_jet(xA, xR):
    n = xA.size
    eye = np.eye(n)
    G = (xA - xR).reshape(n, 1)
    dG_dxA = eye.reshape(n, 1, n).copy()
    dG_dxR = -dG_dxA
    zeros = np.zeros((n, n))
    return ModelJet(G, np.zeros(n), dG_dxA, dG_dxR, zeros, zeros.copy())


def _attract_repel_jet(xA, xR, goal, k=0.0):
    n = xA.size
    eye = np.eye(n)
    G = np.column_stack([xA - xR, goal - xA])
    dG_dxA = np.zeros((n, 2, n))
    dG_dxA[:, 0, :] = eye
    dG_dxA[:, 1, :] = -eye
    dG_dxR = np.zeros((n, 2, n))
    dG_dxR[:, 0, :] = -eye
    f = -k * xA
    df_dxA = -k * eye
    return ModelJet(G, f, dG_dxA, dG_dxR, df_dxA, np.zeros((n, n)))


MODEL_NAMES = ("linear", "attract-repel", "drift")
BARRIER_NAMES = ("disk", "ring")


def make_dynamics(name: str, n: int = 2, goal=None, k: float = 1.0):
    """Return ``(p, model_fn)`` for a built-in dynamics model.

    * ``linear``: ``G = [xA - xR]``, ``f = 0``.
    * ``attract-repel``: ``G = [xA - xR, goal - xA]``, ``f = 0``.
    * ``drift``: attract-repel plus ``f = -k xA``.
    """
    if name == "linear":
        return 1, _linear_jet
    goal = np.zeros(n) if goal is None else _vec(goal, "goal")
    if goal.size != n:
        raise ContractViolation(f"goal has length {goal.size}, expected {n}")
    if name == "attract-repel":
        return 2, lambda xA, xR: _attract_repel_jet(xA, xR, goal)
    if name == "drift":
        k = float(k)
        return 2, lambda xA, xR: _attract_repel_jet(xA, xR, goal, k)
    raise ContractViolation(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


def make_barrier(name: str, n: int = 2, center=None, radius: float = 1.0):
    """Return ``barrier_fn`` for ``disk`` (``R^2 - |xA-c|^2``) or ``ring`` (``|xA-c|^2 - r^2``)."""
    c = np.zeros(n) if center is None else _vec(center, "center")
    if c.size != n:
        raise ContractViolation(f"barrier center has length {c.size}, expected {n}")
    r2 = float(radius) ** 2
    if name == "disk":
        sign = -1.0
    elif name == "ring":
        sign = 1.0
    else:
        raise ContractViolation(f"unknown barrier {name!r}; expected one of {BARRIER_NAMES}")
    hess = 2.0 * sign * np.eye(n)

    def barrier_fn(xA):
        e = xA - c
        return BarrierJet(sign * (e @ e - r2), 2.0 * sign * e, hess.copy())

    return barrier_fn


def make_scenario_model(
    model: str = "linear",
    barrier: str = "disk",
    n: int = 2,
    model_params: dict | None = None,
    barrier_params: dict | None = None,
) -> ScenarioModel:
    model_params = dict(model_params or {})
    barrier_params = dict(barrier_params or {})
    p, model_fn = make_dynamics(model, n, **model_params)
    barrier_fn = make_barrier(barrier, n, **barrier_params)
    return ScenarioModel(
        n=n,
        p=p,
        model_fn=model_fn,
        barrier_fn=barrier_fn,
        name=f"{model}/{barrier}",
        params={"model": model_params, "barrier": barrier_params},
    )


# ---------------------------------------------------------------------------
# finite-difference validation


@dataclass
class ValidationReport:
    errors: dict
    tol: float
    step: float

    @property
    def failed(self) -> list:
        return [k for k, v in self.errors.items() if not v <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failed

    def __str__(self):
        lines = []
        for k, v in self.errors.items():
            tag = "ok  " if v <= self.tol else "FAIL"
            lines.append(f"  {tag} {k:<8} max rel err {v:.3e} (tol {self.tol:g})")
        return "\n".join(lines)


def _rel_err(fd, an):
    return float(np.max(np.abs(fd - an), initial=0.0) / max(1.0, float(np.max(np.abs(an), initial=0.0))))


def check_jets_fd(model: ScenarioModel, s: AgentState, step: float = 1e-6, tol: float = 1e-5) -> ValidationReport:
    """Compare analytic partials against central finite differences at ``s``."""
    if not step > 0:
        raise ContractViolation("finite-difference step must be positive")
    n = model.n
    jet = eval_model_jet(model, s)
    bjet = eval_barrier_jet(model, s.xA)

    fd_G_A = np.empty_like(jet.dG_dxA)
    fd_G_R = np.empty_like(jet.dG_dxR)
    fd_f_A = np.empty_like(jet.df_dxA)
    fd_f_R = np.empty_like(jet.df_dxR)
    fd_h = np.empty(n)
    fd_gh = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        jp = eval_model_jet(model, AgentState(s.xA + e, s.xR))
        jm = eval_model_jet(model, AgentState(s.xA - e, s.xR))
        fd_G_A[:, :, j] = (jp.G - jm.G) / (2 * step)
        fd_f_A[:, j] = (jp.f - jm.f) / (2 * step)
        jp = eval_model_jet(model, AgentState(s.xA, s.xR + e))
        jm = eval_model_jet(model, AgentState(s.xA, s.xR - e))
        fd_G_R[:, :, j] = (jp.G - jm.G) / (2 * step)
        fd_f_R[:, j] = (jp.f - jm.f) / (2 * step)
        bp = eval_barrier_jet(model, s.xA + e)
        bm = eval_barrier_jet(model, s.xA - e)
        fd_h[j] = (bp.h - bm.h) / (2 * step)
        fd_gh[:, j] = (bp.grad_h - bm.grad_h) / (2 * step)

    errors = {
        "dG_dxA": _rel_err(fd_G_A, jet.dG_dxA),
        "dG_dxR": _rel_err(fd_G_R, jet.dG_dxR),
        "df_dxA": _rel_err(fd_f_A, jet.df_dxA),
        "df_dxR": _rel_err(fd_f_R, jet.df_dxR),
        "grad_h": _rel_err(fd_h, bjet.grad_h),
        "hess_h": _rel_err(fd_gh, bjet.hess_h),
    }
    return ValidationReport(errors=errors, tol=tol, step=step)
