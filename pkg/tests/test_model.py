import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_cbf.errors import ContractViolation
from robust_cbf.model import (
    BARRIER_NAMES,
    MODEL_NAMES,
    AgentState,
    BarrierJet,
    ModelJet,
    ScenarioModel,
    check_jets_fd,
    eval_barrier_jet,
    eval_model_jet,
    make_scenario_model,
)

S0 = AgentState(np.array([1.0, 0.0]), np.array([2.0, 0.0]))


def test_linear_jet_at_reference_state():
    jet = eval_model_jet(make_scenario_model("linear", "disk"), S0)
    np.testing.assert_array_equal(jet.G, [[-1.0], [0.0]])
    np.testing.assert_array_equal(jet.dG_dxA[:, 0, :], np.eye(2))
    np.testing.assert_array_equal(jet.dG_dxR[:, 0, :], -np.eye(2))
    assert not np.any(jet.f) and not np.any(jet.df_dxA) and not np.any(jet.df_dxR)


def test_attract_repel_columns():
    m = make_scenario_model("attract-repel", "disk", model_params={"goal": [0.0, 0.0]})
    jet = eval_model_jet(m, S0)
    np.testing.assert_array_equal(jet.G[:, 0], [-1.0, 0.0])
    np.testing.assert_array_equal(jet.G[:, 1], [-1.0, 0.0])


def test_disk_and_ring_barriers():
    disk = make_scenario_model("linear", "disk", barrier_params={"radius": 2.0})
    b = eval_barrier_jet(disk, [1.0, 0.0])
    assert b.h == 3.0
    np.testing.assert_array_equal(b.grad_h, [-2.0, 0.0])
    np.testing.assert_array_equal(b.hess_h, -2 * np.eye(2))
    b = eval_barrier_jet(disk, [0.0, 0.0])
    assert b.h == 4.0 and not np.any(b.grad_h)
    ring = make_scenario_model("linear", "ring", barrier_params={"radius": 1.0, "center": [0.0, 0.0]})
    b = eval_barrier_jet(ring, [2.0, 0.0])
    assert b.h == 3.0
    np.testing.assert_array_equal(b.grad_h, [4.0, 0.0])
    np.testing.assert_array_equal(b.hess_h, 2 * np.eye(2))


def test_dimension_mismatch_is_contract_violation():
    m = make_scenario_model("linear", "disk", n=2)
    with pytest.raises(ContractViolation):
        eval_model_jet(m, AgentState(np.zeros(3), np.zeros(3)))
    with pytest.raises(ContractViolation):
        eval_barrier_jet(m, np.zeros(3))
    with pytest.raises(ContractViolation):
        AgentState(np.zeros(2), np.zeros(3))
    with pytest.raises(ContractViolation):
        AgentState(np.array([np.nan, 0.0]), np.zeros(2))


def test_unknown_names_rejected():
    with pytest.raises(ContractViolation):
        make_scenario_model("spring", "disk")
    with pytest.raises(ContractViolation):
        make_scenario_model("linear", "square")


def test_fd_linear_is_exact_to_rounding():
    rep = check_jets_fd(make_scenario_model("linear", "disk"), S0, step=1e-6, tol=1e-5)
    assert rep.passed
    assert max(rep.errors.values()) <= 1e-9


def test_fd_attract_repel_passes():
    m = make_scenario_model("attract-repel", "ring", model_params={"goal": [0.5, -0.5]})
    assert check_jets_fd(m, S0, step=1e-6, tol=1e-5).passed


def test_fd_detects_corrupted_jacobian():
    base = make_scenario_model("drift", "disk")

    def corrupted(xA, xR):
        j = base.model_fn(xA, xR)
        bad = j.df_dxA.copy()
        bad[0, 1] += 0.1
        return ModelJet(j.G, j.f, j.dG_dxA, j.dG_dxR, bad, j.df_dxR)

    m = ScenarioModel(2, base.p, corrupted, base.barrier_fn, "corrupted")
    rep = check_jets_fd(m, S0)
    assert rep.failed == ["df_dxA"]
    assert "FAIL" in str(rep)


def test_fd_step_must_be_positive():
    with pytest.raises(ContractViolation):
        check_jets_fd(make_scenario_model(), S0, step=0.0)


def test_barrier_jet_rejects_asymmetric_hessian():
    with pytest.raises(ContractViolation):
        BarrierJet(1.0, np.zeros(2), np.array([[1.0, 1e-6], [0.0, 1.0]])).validate(2)


@pytest.mark.parametrize("model", MODEL_NAMES)
@pytest.mark.parametrize("barrier", BARRIER_NAMES)
def test_jacobian_consistency_random_states(model, barrier):
    rng = np.random.default_rng(hash((model, barrier)) % 2**32)
    m = make_scenario_model(model, barrier, model_params={} if model == "linear" else {"goal": [0.3, -0.2]})
    for _ in range(100):
        s = AgentState(rng.standard_normal(2) * 2, rng.standard_normal(2) * 2)
        assert check_jets_fd(m, s, 1e-6, 1e-5).passed


@pytest.mark.parametrize("barrier", BARRIER_NAMES)
def test_hessian_exactly_symmetric(barrier):
    b = eval_barrier_jet(make_scenario_model("linear", barrier), [0.3, -1.2])
    assert np.max(np.abs(b.hess_h - b.hess_h.T)) == 0.0


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.sampled_from(MODEL_NAMES))
def test_evaluation_is_deterministic(vals, model):
    m = make_scenario_model(model, "disk")
    s = AgentState(np.array(vals[:2]), np.array(vals[2:]))
    a, b = eval_model_jet(m, s), eval_model_jet(m, s)
    for name in ("G", "f", "dG_dxA", "dG_dxR", "df_dxA", "df_dxR"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_first_order_taylor_error_is_quadratic():
    m = make_scenario_model("drift", "disk", model_params={"goal": [1.0, 1.0], "k": 0.7})
    d = np.array([0.3, -0.4])
    errs = []
    for eps in (1e-2, 5e-3):
        j0 = eval_model_jet(m, S0)
        j1 = eval_model_jet(m, AgentState(S0.xA + eps * d, S0.xR))
        pred = j0.f + j0.df_dxA @ (eps * d)
        errs.append(np.abs(j1.f - pred).max() + 1e-300)
    # model is affine in the state, so the remainder vanishes to rounding
    assert max(errs) < 1e-12


def test_n1_models_work():
    m = make_scenario_model("attract-repel", "disk", n=1, model_params={"goal": [0.0]})
    assert check_jets_fd(m, AgentState(np.array([0.5]), np.array([1.5]))).passed
