import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_cbf.constraint import (
    ConstraintData,
    GainPair,
    ParameterEstimate,
    TildeConstraint,
    assemble_constraint,
    assemble_hdot,
    constraint_residual,
    normalize_constraint,
    residual_matches_theta,
)
from robust_cbf.errors import ContractViolation
from robust_cbf.model import AgentState, eval_barrier_jet, eval_model_jet, make_scenario_model
from robust_cbf.verification import random_constraint


def _jets(model, s):
    return eval_model_jet(model, s), eval_barrier_jet(model, s.xA)


def test_linear_disk_reference_coefficients():
    # xA = (1, 0), xR = (2, 0), disk radius 2 about the origin, alpha = 2, beta = 1
    m = make_scenario_model("linear", "disk", barrier_params={"radius": 2.0})
    s = AgentState(np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    c = assemble_constraint(*_jets(m, s), GainPair())
    np.testing.assert_allclose(c.C, [[-2.0, 0.0]])
    np.testing.assert_allclose(c.d, [0.0, 0.0])
    np.testing.assert_allclose(c.H, [[0.0]])
    np.testing.assert_allclose(c.fcoef, [4.0])
    assert c.g == pytest.approx(3.0)
    hd = assemble_hdot(*_jets(m, s), np.array([1.0]))
    assert hd.hdot == pytest.approx(2.0)


def test_gain_validation():
    with pytest.raises(ContractViolation):
        GainPair(0.0, 1.0)
    with pytest.raises(ContractViolation):
        GainPair(1.0, 1.0)  # complex roots
    assert GainPair(6.0, 9.0).slow_rate == pytest.approx(3.0)
    assert GainPair(2.0, 1.0).slow_rate == pytest.approx(1.0)


def test_shape_contracts():
    with pytest.raises(ContractViolation):
        ConstraintData(np.ones((2, 2)), np.ones(3), np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ContractViolation):
        TildeConstraint(np.ones((2, 1)), np.ones(1), np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2), 0.0)
    with pytest.raises(ContractViolation):
        ParameterEstimate(np.zeros(2), -0.1)
    with pytest.raises(ContractViolation):
        normalize_constraint(random_constraint(np.random.default_rng(0), 2, 2), ParameterEstimate(np.zeros(3), 0.1))


def test_substitution_equivalence_1000_draws():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        p, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        c = random_constraint(rng, p, m)
        est = ParameterEstimate(rng.standard_normal(p), float(rng.uniform(0.0, 2.0)))
        z = rng.standard_normal(p)
        z /= max(1.0, np.linalg.norm(z))
        a, b = residual_matches_theta(c, est, rng.standard_normal(m), z)
        worst = max(worst, abs(a - b) / (1.0 + abs(b)))
    assert worst <= 1e-12


def test_nonsymmetric_h_is_expanded_exactly():
    c = ConstraintData(np.ones((2, 1)), [0.5], [[1.0, 3.0], [-1.0, 2.0]], [0.2, -0.3], 1.0)
    est = ParameterEstimate([0.4, -0.7], 0.3)
    t = normalize_constraint(c, est)
    assert np.array_equal(t.Ht, t.Ht.T)
    a, b = residual_matches_theta(c, est, [1.3], [0.6, 0.8])
    assert a == pytest.approx(b, abs=1e-13)


def test_eta_zero_collapses_to_nominal():
    rng = np.random.default_rng(5)
    c = random_constraint(rng, 3, 2)
    th = rng.standard_normal(3)
    t = normalize_constraint(c, ParameterEstimate(th, 0.0))
    assert not np.any(t.Ct) and not np.any(t.Ht) and not np.any(t.ft)
    u = rng.standard_normal(2)
    assert constraint_residual(t, u, np.zeros(3)) == pytest.approx(
        th @ c.H @ th + c.fcoef @ th + c.g - (c.C.T @ th + c.d) @ u
    )


def test_normalized_reference_coefficients():
    c = ConstraintData([[-2.0, 0.0]], [0.0, 0.0], [[0.0]], [4.0], 3.0)
    t = normalize_constraint(c, ParameterEstimate([1.0], 0.5))
    np.testing.assert_allclose(t.Ct, [[-1.0, 0.0]])
    np.testing.assert_allclose(t.dt, [-2.0, 0.0])
    np.testing.assert_allclose(t.Ht, [[0.0]])
    np.testing.assert_allclose(t.ft, [2.0])
    assert t.gt == pytest.approx(7.0)
    assert constraint_residual(t, [0.0, 0.0], [1.0]) == pytest.approx(9.0)
    assert constraint_residual(t, [1.0, 3.0], [0.0]) == pytest.approx(t.gt - t.dt @ [1.0, 3.0])


def test_identity_normalization():
    c = random_constraint(np.random.default_rng(9), 2, 2)
    t = normalize_constraint(c, ParameterEstimate(np.zeros(2), 1.0))
    np.testing.assert_array_equal(t.Ct, c.C)
    np.testing.assert_array_equal(t.dt, c.d)
    np.testing.assert_array_equal(t.Ht, 0.5 * (c.H + c.H.T))
    np.testing.assert_array_equal(t.ft, c.fcoef)
    assert t.gt == c.g


def test_zero_drift_gives_beta_h():
    m = make_scenario_model("linear", "ring")
    s = AgentState(np.array([0.3, 1.7]), np.array([-1.0, 0.4]))
    c = assemble_constraint(*_jets(m, s), GainPair(5.0, 4.0))
    assert not np.any(c.d)
    assert c.g == pytest.approx(4.0 * eval_barrier_jet(m, s.xA).h)
    hd = assemble_hdot(*_jets(m, s), np.zeros(1))
    assert hd.hdot == hd.v == 0.0


def _rk4(mdl, theta, u, s, dt):
    # dt < 0 integrates backwards in time
    def f(xA, xR):
        j = mdl.model_fn(xA, xR)
        return j.G @ theta + j.f, u

    xA, xR = s.xA, s.xR
    k1 = f(xA, xR)
    k2 = f(xA + 0.5 * dt * k1[0], xR + 0.5 * dt * k1[1])
    k3 = f(xA + 0.5 * dt * k2[0], xR + 0.5 * dt * k2[1])
    k4 = f(xA + dt * k3[0], xR + dt * k3[1])
    return AgentState(
        xA + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        xR + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
    )


@pytest.mark.parametrize("model", ["linear", "attract-repel", "drift"])
@pytest.mark.parametrize("barrier", ["disk", "ring"])
def test_hddot_matches_finite_differences(model, barrier):
    """With vanishing gains the assembled coefficients are the expansion of hddot."""
    rng = np.random.default_rng(sum(map(ord, model + barrier)))
    params = {} if model == "linear" else {"goal": [0.4, -0.3]}
    mdl = make_scenario_model(model, barrier, model_params=params)
    gains = GainPair(2e-12, 1e-24)
    dt = 1e-4
    for _ in range(10):
        s = AgentState(rng.standard_normal(2) * 2, rng.standard_normal(2) * 2)
        theta = rng.standard_normal(mdl.p)
        u = rng.standard_normal(2)
        c = assemble_constraint(*_jets(mdl, s), gains)
        predicted = theta @ c.H @ theta + c.fcoef @ theta + c.g - (c.C.T @ theta + c.d) @ u
        h = lambda st: eval_barrier_jet(mdl, st.xA).h  # noqa: E731
        fd = (h(_rk4(mdl, theta, u, s, dt)) - 2 * h(s) + h(_rk4(mdl, theta, u, s, -dt))) / dt**2
        assert fd == pytest.approx(predicted, rel=1e-4, abs=1e-4 * (1 + abs(h(s))))


def test_hdot_matches_flow_derivative():
    m = make_scenario_model("linear", "disk", barrier_params={"radius": 2.0})
    s = AgentState(np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    hd = assemble_hdot(*_jets(m, s), np.array([1.0]))
    np.testing.assert_allclose(hd.w, [2.0])
    assert (hd.v, hd.h) == (0.0, 3.0)
    dt = 1e-5
    h = lambda st: eval_barrier_jet(m, st.xA).h  # noqa: E731
    fd = (h(_rk4(m, [1.0], np.zeros(2), s, dt)) - h(_rk4(m, [1.0], np.zeros(2), s, -dt))) / (2 * dt)
    assert fd == pytest.approx(2.0, rel=1e-8)


@given(
    st.integers(1, 3),
    st.integers(1, 3),
    st.floats(0.0, 3.0),
    st.integers(0, 2**31),
)
def test_residual_equivalence_property(p, m, eta, seed):
    rng = np.random.default_rng(seed)
    c = random_constraint(rng, p, m)
    est = ParameterEstimate(rng.standard_normal(p), eta)
    z = rng.standard_normal(p)
    z /= max(1.0, np.linalg.norm(z))
    a, b = residual_matches_theta(c, est, rng.standard_normal(m), z)
    assert abs(a - b) <= 1e-10 * (1 + abs(b))
    t = normalize_constraint(c, est)
    assert np.array_equal(t.Ht, t.Ht.T)
