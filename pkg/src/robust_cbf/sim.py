"""Closed-loop simulation with the robust safety filter in the loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraint import GainPair, ParameterEstimate, assemble_constraint, assemble_hdot, normalize_constraint
from .errors import ContractViolation, NonConvergenceError, NumericalFailure, SetupError
from .model import AgentState, ScenarioModel, eval_barrier_jet, eval_model_jet
from .oracle import solve_robust_qp_cutting_plane, worst_case_z
from .sdp import SolveStatus, SolverOptions, solve_safe_control

__all__ = [
    "Scenario",
    "StepRecord",
    "TrajectoryLog",
    "SafetySummary",
    "step_rk4",
    "project_estimate",
    "update_estimate",
    "run_simulation",
    "safety_report",
    "ESTIMATOR_MODES",
]

ESTIMATOR_MODES = ("static", "set-membership")
CONTAINMENT_TOL = 1e-9


@dataclass
class Scenario:
    model: ScenarioModel
    theta_true: np.ndarray
    estimate: ParameterEstimate
    xA0: np.ndarray
    xR0: np.ndarray
    gains: GainPair = field(default_factory=GainPair)
    dt: float = 0.01
    duration: float = 5.0
    estimator: str = "set-membership"
    estimator_period: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0

    def __post_init__(self):
        self.theta_true = np.atleast_1d(np.asarray(self.theta_true, dtype=float))
        self.xA0 = np.atleast_1d(np.asarray(self.xA0, dtype=float))
        self.xR0 = np.atleast_1d(np.asarray(self.xR0, dtype=float))
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        if not self.duration >= 0:
            raise ContractViolation("duration must be nonnegative")
        if self.estimator not in ESTIMATOR_MODES:
            raise ContractViolation(f"estimator must be one of {ESTIMATOR_MODES}, got {self.estimator!r}")
        if self.estimator_period < 1:
            raise ContractViolation("estimator period must be at least 1")
        p, n = self.model.p, self.model.n
        if self.theta_true.shape != (p,) or self.estimate.theta_hat.shape != (p,):
            raise ContractViolation(f"parameter vectors must have length p={p}")
        if self.xA0.shape != (n,) or self.xR0.shape != (n,):
            raise ContractViolation(f"initial states must have length n={n}")
        if not self.estimate.contains(self.theta_true, CONTAINMENT_TOL):
            dist = np.linalg.norm(self.theta_true - self.estimate.theta_hat)
            raise SetupError(
                f"theta_true lies outside the initial ball: distance {dist:.6g} > eta {self.estimate.eta:.6g}"
            )

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class StepRecord:
    t: float
    xA: np.ndarray
    xR: np.ndarray
    u: np.ndarray
    h: float
    hdot: float
    margin: float
    lam: float
    status: SolveStatus
    theta_hat: np.ndarray
    eta: float
    slack: float


@dataclass
class TrajectoryLog:
    records: list = field(default_factory=list)
    degraded: bool = False
    clamped_updates: int = 0
    containment: list = field(default_factory=list)  # (t, |theta_true - theta_hat|, eta) per update
    minimality_gaps: list = field(default_factory=list)  # |u_sdp| - |u_cp| on spot-checked steps

    def append(self, rec: StepRecord) -> None:
        if self.records and not rec.t > self.records[-1].t:
            raise ContractViolation("log times must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass(frozen=True)
class SafetySummary:
    min_h: float
    min_margin: float
    infeasible_steps: int
    final_theta_hat: np.ndarray
    final_eta: float
    eta_monotone: bool
    degraded: bool

    def __str__(self):
        th = " ".join(f"{v:.6g}" for v in self.final_theta_hat)
        return (
            f"min h           {self.min_h:.6e}\n"
            f"min margin      {self.min_margin:.6e}\n"
            f"infeasible      {self.infeasible_steps}\n"
            f"final theta_hat {th}\n"
            f"final eta       {self.final_eta:.6g}\n"
            f"eta monotone    {'yes' if self.eta_monotone else 'NO'}\n"
            f"degraded        {'yes' if self.degraded else 'no'}"
        )


def _xdot(model: ScenarioModel, theta, u, xA, xR):
    jet = model.model_fn(xA, xR)
    return jet.G @ theta + jet.f, u


def step_rk4(model: ScenarioModel, theta_true, u, s: AgentState, dt: float) -> AgentState:
    """One classical RK4 step of the human/robot pair with ``u`` held constant."""
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    theta = np.atleast_1d(np.asarray(theta_true, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != s.xR.shape:
        raise ContractViolation(f"u has shape {u.shape}, expected {s.xR.shape}")
    xA, xR = s.xA, s.xR
    k1A, k1R = _xdot(model, theta, u, xA, xR)
    k2A, k2R = _xdot(model, theta, u, xA + 0.5 * dt * k1A, xR + 0.5 * dt * k1R)
    k3A, k3R = _xdot(model, theta, u, xA + 0.5 * dt * k2A, xR + 0.5 * dt * k2R)
    k4A, k4R = _xdot(model, theta, u, xA + dt * k3A, xR + dt * k3R)
    nA = xA + dt / 6.0 * (k1A + 2 * k2A + 2 * k3A + k4A)
    nR = xR + dt / 6.0 * (k1R + 2 * k2R + 2 * k3R + k4R)
    if not (np.all(np.isfinite(nA)) and np.all(np.isfinite(nR))):
        raise NumericalFailure("integration produced a non-finite state")
    return AgentState(nA, nR)


def project_estimate(est: ParameterEstimate, G, xdot_minus_f) -> tuple[ParameterEstimate, bool]:
    """Shrink the ball onto the affine set ``{theta : G theta = y}``.

    Returns the new estimate and whether the update was clamped because the
    projection distance exceeded the current radius.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    y = np.atleast_1d(np.asarray(xdot_minus_f, dtype=float))
    step = np.linalg.lstsq(G, y - G @ est.theta_hat, rcond=None)[0]
    dist = float(np.linalg.norm(step))
    if dist > est.eta * (1.0 + 1e-12) + CONTAINMENT_TOL:
        return est, True
    eta = float(np.sqrt(max(0.0, est.eta**2 - dist**2)))
    return ParameterEstimate(est.theta_hat + step, min(eta, est.eta)), False


def update_estimate(est: ParameterEstimate, G, xdot_minus_f) -> ParameterEstimate:
    return project_estimate(est, G, xdot_minus_f)[0]


def _initial_check(sc: Scenario, s: AgentState) -> None:
    jet = eval_model_jet(sc.model, s)
    bjet = eval_barrier_jet(sc.model, s.xA)
    if bjet.h < 0:
        raise SetupError(f"initial state is unsafe: h(0) = {bjet.h:.6g} < 0")
    hd = assemble_hdot(jet, bjet, sc.estimate.theta_hat)
    # worst case of w . theta + v over the initial ball
    hdot_min = hd.hdot - sc.estimate.eta * float(np.linalg.norm(hd.w))
    rate = sc.gains.slow_rate
    if hdot_min + rate * bjet.h < 0:
        raise SetupError(
            f"initial condition violates hdot + {rate:.6g} h >= 0 (worst case {hdot_min + rate * bjet.h:.6g})"
        )


def run_simulation(sc: Scenario, minimality_check_every: int = 0) -> TrajectoryLog:
    """Integrate the closed loop on a fixed grid and log every grid point.

    The control computed at each grid point is held over the following step.
    With ``minimality_check_every > 0`` the filter output is compared against
    the cutting-plane solution on every such step.
    """
    s = AgentState(sc.xA0, sc.xR0)
    _initial_check(sc, s)
    est = sc.estimate
    log = TrajectoryLog()
    n = sc.model.n
    for k in range(sc.steps + 1):
        t_k = k * sc.dt
        jet = eval_model_jet(sc.model, s)
        bjet = eval_barrier_jet(sc.model, s.xA)
        tilde = normalize_constraint(assemble_constraint(jet, bjet, sc.gains), est)
        sol = solve_safe_control(tilde, sc.solver)
        if sol.optimal:
            u = sol.u
        else:
            log.degraded = True
            u = np.zeros(n)
        margin = worst_case_z(tilde, u).value
        if minimality_check_every and sol.optimal and k % minimality_check_every == 0:
            try:
                ucp = solve_robust_qp_cutting_plane(tilde).u
                log.minimality_gaps.append(float(np.linalg.norm(u) - np.linalg.norm(ucp)))
            except NonConvergenceError:
                pass
        hdot = assemble_hdot(jet, bjet, sc.theta_true).hdot
        log.append(
            StepRecord(
                t=t_k,
                xA=s.xA.copy(),
                xR=s.xR.copy(),
                u=u.copy(),
                h=float(bjet.h),
                hdot=hdot,
                margin=margin,
                lam=sol.lam if sol.optimal else float("nan"),
                status=sol.status,
                theta_hat=est.theta_hat.copy(),
                eta=est.eta,
                slack=sol.slack,
            )
        )
        if k == sc.steps:
            break
        s = step_rk4(sc.model, sc.theta_true, u, s, sc.dt)
        if sc.estimator == "set-membership" and (k + 1) % sc.estimator_period == 0:
            G = eval_model_jet(sc.model, s).G
            est, clamped = project_estimate(est, G, G @ sc.theta_true)
            log.clamped_updates += int(clamped)
            log.containment.append(((k + 1) * sc.dt, float(np.linalg.norm(sc.theta_true - est.theta_hat)), est.eta))
    return log


def safety_report(log: TrajectoryLog) -> SafetySummary:
    if not log.records:
        raise ContractViolation("safety_report needs a nonempty log")
    eta = log.column("eta")
    margins = log.column("margin")
    return SafetySummary(
        min_h=float(log.column("h").min()),
        min_margin=float(np.nanmin(margins)) if np.any(np.isfinite(margins)) else float("nan"),
        infeasible_steps=sum(r.status is SolveStatus.INFEASIBLE for r in log.records),
        final_theta_hat=log.records[-1].theta_hat.copy(),
        final_eta=float(eta[-1]),
        eta_monotone=bool(np.all(np.diff(eta) <= 1e-12)),
        degraded=log.degraded,
    )
