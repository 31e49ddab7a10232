"""Shared test utilities."""
from pathlib import Path

import numpy as np

from robust_cbf.model import AgentState, eval_model_jet, make_scenario_model
from robust_cbf.sim import step_rk4

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
SHIPPED = ["linear_disk.cfg", "linear_disk_uncertain.cfg"]


def rk4_global_errors(dts=(0.02, 0.01, 0.005), horizon=1.0, theta=0.7):
    """Error at ``horizon`` of the linear model with the robot parked, against
    the closed form ``xA(t) = xR + (xA0 - xR) exp(theta t)``."""
    model = make_scenario_model("linear", "disk")
    xA0, xR = np.array([1.0, -0.5]), np.array([4.0, 3.0])
    exact = xR + (xA0 - xR) * np.exp(theta * horizon)
    errs = []
    for dt in dts:
        s = AgentState(xA0, xR)
        for _ in range(int(round(horizon / dt))):
            s = step_rk4(model, [theta], np.zeros(2), s, dt)
        errs.append(float(np.linalg.norm(s.xA - exact)))
    assert eval_model_jet(model, AgentState(xA0, xR)).G.shape == (2, 1)
    return errs
