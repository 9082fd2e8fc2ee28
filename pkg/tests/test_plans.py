import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbmd.errors import ParameterError, PlanError
from sbmd.plans import (
    StepsizePlan, plan_composite, plan_composite_strongly, plan_nonconvex, plan_nonsmooth_a, plan_nonsmooth_b,
    plan_strongly, recommended_D_tilde,
)


def test_nonsmooth_a_uniform_blocks():
    plan = plan_nonsmooth_a([1.0, 1.0], [1.0, 1.0], 8)
    np.testing.assert_allclose(plan.p, [0.5, 0.5])
    assert plan.gamma[0] == pytest.approx(0.7071067811865475, abs=1e-15)
    assert np.all(plan.gamma == plan.gamma[0])
    assert plan.theta.shape == (9,)


def test_nonsmooth_a_probabilities_follow_sqrt_D():
    plan = plan_nonsmooth_a([1.0, 4.0, 0.25], [1.0, 1.0, 1.0], 10)
    np.testing.assert_allclose(plan.p, np.array([1.0, 2.0, 0.5]) / 3.5)


def test_nonsmooth_a_needs_bounded_sets():
    with pytest.raises(PlanError):
        plan_nonsmooth_a([1.0, None], [1.0, 1.0], 4)


def test_nonsmooth_b_stepsize():
    plan = plan_nonsmooth_b(1.0, [1.0] * 4, 4, 64)
    assert plan.gamma[0] == pytest.approx(0.1767766952966369, abs=1e-15)
    np.testing.assert_allclose(plan.p, 0.25)


def test_recommended_D_tilde():
    assert recommended_D_tilde([1.0, 3.0]) == 2.0
    with pytest.raises(PlanError):
        recommended_D_tilde([1.0, None])


def test_strongly_example():
    plan = plan_strongly(2, 1.0, 1.0, 3)
    np.testing.assert_allclose(plan.gamma, [2.0, 4.0 / 3.0, 1.0], rtol=1e-15)
    assert plan.Gamma[0] == 1.0
    assert plan.Gamma[1] == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert plan.theta[1] == pytest.approx(4.0, rel=1e-14)


@given(st.integers(1, 5), st.floats(1.0, 3.0), st.floats(0.1, 10.0))
def test_strongly_theta_closed_form(b, Q, mu):
    plan = plan_strongly(b, Q, mu, 60)
    k = np.arange(1, 62)
    np.testing.assert_allclose(plan.theta, b * k * Q / mu, rtol=1e-9)
    assert np.all(plan.gamma <= b * Q / mu * (1 + 1e-12))


def test_composite_example():
    plan = plan_composite(2, 4.0, 1.0, 1.0, 32)
    assert plan.gamma[0] == 0.125
    assert plan.theta[0] == 0.0
    np.testing.assert_allclose(plan.theta[1:], 0.125)


def test_composite_noise_term_binds():
    plan = plan_composite(1, 1.0, 10.0, 1.0, 100)
    assert plan.gamma[0] == pytest.approx(0.01)
    assert plan_composite(1, 1.0, 0.0, 1.0, 100).gamma[0] == 0.5


def test_composite_strongly_example():
    plan = plan_composite_strongly(2, 1.0, 1.0, 1.0, 10)
    assert plan.meta["k0"] == 8
    assert plan.gamma[0] == pytest.approx(4.0 / 9.0, rel=1e-15)
    assert plan.theta[0] == 0.0
    assert np.all(plan.theta >= 0)
    assert np.all(plan.gamma <= 1.0 / (2.0 * 1.0))


def test_composite_strongly_rejects_small_k0():
    with pytest.raises(ParameterError):
        plan_composite_strongly(1, 1.0, 10.0, 1.0, 10)


def test_nonconvex_example():
    plan = plan_nonconvex([1.0, 2.0], None, 5)
    np.testing.assert_allclose(plan.gamma, 0.5)
    # gamma * min(0.5 * (1 - 0.25), 0.5 * (1 - 0.5)) = 0.5 * 0.25
    np.testing.assert_allclose(plan.meta["unnormalized_weights"], 0.125)
    np.testing.assert_allclose(plan.output_weights, 0.2)


def test_plan_arrays_are_read_only():
    plan = plan_composite(2, 1.0, 1.0, 1.0, 8)
    with pytest.raises(ValueError):
        plan.gamma[0] = 1.0


def test_constraint_rejections():
    with pytest.raises(PlanError):
        StepsizePlan("strongly-convex", np.array([5.0]), np.ones(2), np.ones(1), meta={"Q": 1.0, "mu": 1.0})
    with pytest.raises(PlanError):
        StepsizePlan("composite", np.array([1.0]), np.array([0.0, 1.0]), np.ones(1), meta={"L_bar": 1.0})
    with pytest.raises(PlanError):
        StepsizePlan("composite", np.array([0.1]), np.array([1.0, 1.0]), np.ones(1), meta={"L_bar": 1.0})
    with pytest.raises(PlanError):
        StepsizePlan(
            "nonconvex", np.array([2.0]), np.zeros(2), np.ones(1),
            output_weights=np.ones(1), meta={"L": [1.0]},
        )
    with pytest.raises(PlanError):
        StepsizePlan("nonsmooth-b", np.array([0.1]), np.ones(2), np.array([0.6, 0.6]))
    with pytest.raises(PlanError):
        StepsizePlan("nonsmooth-b", np.array([0.1]), np.ones(3), np.ones(1))
    with pytest.raises(PlanError):
        StepsizePlan("nonsmooth-b", np.array([-0.1]), np.ones(2), np.ones(1))
    with pytest.raises(PlanError):
        StepsizePlan("mystery", np.array([0.1]), np.ones(2), np.ones(1))


def test_invalid_horizon():
    for N in (0, -3, 2.5):
        with pytest.raises(ParameterError):
            plan_nonsmooth_b(1.0, [1.0], 1, N)
    assert math.isfinite(plan_nonsmooth_b(1.0, [1.0], 1, 1).gamma[0])
