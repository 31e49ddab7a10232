"""Cross-method checks on random robust constraints.

Each instance is solved by the SDP and by cutting planes, and the SDP answer
is checked against the inner-minimization oracles. Everything is seeded per
instance index so results do not depend on evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraint import ConstraintData, ParameterEstimate, TildeConstraint, normalize_constraint
from .errors import InfeasibleError, NonConvergenceError
from .oracle import dual_lower_bound, sample_verify, solve_robust_qp_cutting_plane, worst_case_z
from .sdp import SolverOptions, build_robust_lmi, build_slemma_pair, solve_safe_control

__all__ = [
    "AGREEMENT_TOL",
    "SOUNDNESS_TOL",
    "DUAL_TOL",
    "LAMBDA_GRID",
    "InstanceResult",
    "VerifyReport",
    "instance_rng",
    "random_constraint",
    "random_instance",
    "golden_instance",
    "check_instance",
    "run_verify",
]

AGREEMENT_TOL = 1e-4
SOUNDNESS_TOL = 1e-6
DUAL_TOL = 1e-9
LAMBDA_GRID = np.round(np.arange(0.0, 10.0 + 1e-9, 0.1), 10)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def random_constraint(rng: np.random.Generator, p: int, m: int) -> ConstraintData:
    """Constraint coefficients with unit Gaussian entries."""
    return ConstraintData(
        C=rng.standard_normal((p, m)),
        d=rng.standard_normal(m),
        H=rng.standard_normal((p, p)),
        fcoef=rng.standard_normal(p),
        g=float(rng.standard_normal()),
    )


def random_instance(rng: np.random.Generator, p: int, m: int, eta_range=(0.1, 1.0)) -> TildeConstraint:
    c = random_constraint(rng, p, m)
    est = ParameterEstimate(rng.standard_normal(p), float(rng.uniform(*eta_range)))
    return normalize_constraint(c, est)


def golden_instance() -> TildeConstraint:
    """``theta u <= -1`` for every ``theta`` in ``[0.5, 1.5]``; optimum ``u = -2``."""
    c = ConstraintData(C=np.ones((1, 1)), d=np.zeros(1), H=np.zeros((1, 1)), fcoef=np.zeros(1), g=-1.0)
    return normalize_constraint(c, ParameterEstimate(np.ones(1), 0.5))


@dataclass
class InstanceResult:
    index: int
    feasible: bool  # cutting planes found a robustly feasible control
    checks: dict = field(default_factory=dict)  # name -> bool
    detail: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def check_instance(
    t: TildeConstraint,
    rng: np.random.Generator,
    index: int = 0,
    opts: SolverOptions | None = None,
    samples: int = 10_000,
) -> InstanceResult:
    sol = solve_safe_control(t, opts)
    try:
        cp = solve_robust_qp_cutting_plane(t)
        u_cp = cp.u
    except (InfeasibleError, NonConvergenceError) as exc:
        u_cp, cp_err = None, exc
    res = InstanceResult(index=index, feasible=u_cp is not None)
    checks = res.checks

    if u_cp is not None:
        ok = sol.optimal and np.linalg.norm(sol.u - u_cp) <= AGREEMENT_TOL * (1 + np.linalg.norm(sol.u))
        checks["agreement"] = bool(ok)
        if not ok:
            res.detail = f"sdp {sol.status} u={sol.u}, cutting plane u={u_cp}"
    else:
        # an Optimal SDP answer must then be refuted by the soundness checks below
        checks["agreement"] = not sol.optimal or isinstance(cp_err, NonConvergenceError)
        if not checks["agreement"]:
            res.detail = f"sdp Optimal while cutting planes report {cp_err}"

    if sol.optimal:
        margin = worst_case_z(t, sol.u).value
        sampled = sample_verify(t, sol.u, samples, int(rng.integers(2**32)))
        checks["soundness"] = margin >= -SOUNDNESS_TOL and sampled >= -SOUNDNESS_TOL
        checks["kkt"] = sol.kkt_residual <= (opts or SolverOptions()).tol
        checks["strong_duality"] = dual_lower_bound(t, sol.u, sol.lam) >= -SOUNDNESS_TOL

    u = rng.standard_normal(t.m)
    lam = float(rng.uniform(0.0, 10.0))
    pair = build_slemma_pair(t)
    checks["slemma_identity"] = bool(np.array_equal(pair.shifted(u, lam), build_robust_lmi(t).M(u, lam)))

    wc = worst_case_z(t, u).value
    bounds = np.array([dual_lower_bound(t, u, lg) for lg in LAMBDA_GRID])
    finite = np.isfinite(bounds)
    checks["dual_bound"] = bool(np.all(bounds[finite] <= wc + DUAL_TOL))
    return res


@dataclass
class VerifyReport:
    results: list

    @property
    def counts(self) -> dict:
        out: dict = {}
        for r in self.results:
            for name, ok in r.checks.items():
                good, total = out.get(name, (0, 0))
                out[name] = (good + int(ok), total + 1)
        return out

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __str__(self):
        lines = [f"instances {len(self.results)} (feasible {sum(r.feasible for r in self.results)})"]
        for name, (good, total) in self.counts.items():
            lines.append(f"  {name:<16} {good}/{total} {'pass' if good == total else 'FAIL'}")
        for r in self.results:
            if not r.passed:
                bad = ", ".join(k for k, v in r.checks.items() if not v)
                lines.append(f"  instance {r.index}: {bad} {r.detail}".rstrip())
        return "\n".join(lines)


def run_verify(count: int, seed: int, p: int, m: int, opts: SolverOptions | None = None) -> VerifyReport:
    """Run :func:`check_instance` on ``count`` seeded random instances.

    With ``p = m = 1`` the first instance is the interval example.
    """
    if count < 1 or p < 1 or m < 1:
        raise ValueError("count, p and m must be positive")
    results = []
    for k in range(count):
        rng = instance_rng(seed, k)
        t = golden_instance() if (k == 0 and p == 1 and m == 1) else random_instance(rng, p, m)
        results.append(check_instance(t, rng, k, opts))
    return VerifyReport(results)
