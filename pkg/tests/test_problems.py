import math

import numpy as np
import pytest
from scipy.integrate import quad

from sbmd.errors import DimensionError, ParameterError
from sbmd.problems import (
    COMPOSITE, COMPOSITE_STRONG, NONCONVEX, NONSMOOTH, NONSMOOTH_STRONG, make_p1_nonsmooth, make_p2_strongly,
    make_p3_composite, make_p4_nonconvex, make_problem, reference_solution,
)
from sbmd.verify import block_estimator_zscores, random_feasible, zoo_instances


def test_p1_degenerate_noise_sample_is_center():
    p = make_p1_nonsmooth(3, 1, 0.0, center=0.2)
    np.testing.assert_array_equal(p.sample(np.random.default_rng(0)), np.full(3, 0.2))


def test_sampling_is_reproducible():
    p = make_p1_nonsmooth(4, 2, 0.5)
    rng = np.random.default_rng(42)
    a, b = p.sample(rng), p.sample(rng)
    assert not np.array_equal(a, b)
    rng = np.random.default_rng(42)
    assert np.array_equal(p.sample(rng), a) and np.array_equal(p.sample(rng), b)


def test_p1_sample_mean_within_standard_error():
    p = make_p1_nonsmooth(4, 2, 0.5, center=0.3)
    xs = p.sample_batch(np.random.default_rng(1), 100_000)
    assert np.all(np.abs(xs.mean(axis=0) - 0.3) <= 3 * 0.5 / math.sqrt(3 * 100_000))


def test_p1_subgradient_tie_is_zero():
    p = make_p1_nonsmooth(4, 2, 0.5, center=0.1)
    g = p.stoch_subgrad_block(p.center, p.center.copy(), 1)
    assert g.tolist() == [0.0, 0.0]


def test_p3_noiseless_gradient_blocks():
    p = make_p3_composite(2, 2, [1.0, 2.0], [0.0, 0.0])
    x = np.array([1.0, 1.0])
    xi = p.sample(np.random.default_rng(0))
    assert p.stoch_subgrad_block(x, xi, 0).tolist() == [1.0]
    assert p.stoch_subgrad_block(x, xi, 1).tolist() == [2.0]


def test_invalid_block_index():
    p = make_p1_nonsmooth(4, 2, 0.5)
    with pytest.raises(DimensionError):
        p.stoch_subgrad_block(np.zeros(4), np.zeros(4), 2)


def test_p1_monte_carlo_matches_analytic_gradient():
    p = make_p1_nonsmooth(4, 1, 0.5, center=0.1)
    rng = np.random.default_rng(3)
    x = np.array([0.0, 0.3, -0.9, 0.55])
    xis = p.sample_batch(rng, 100_000)
    G = p.stoch_subgrad_block_batch(x, xis, 0)
    se = G.std(axis=0, ddof=1) / math.sqrt(len(G))
    assert np.all(np.abs(G.mean(axis=0) - p.grad(x)) <= 4 * se)


def test_p1_optimal_value_matches_quadrature():
    p = make_p1_nonsmooth(16, 4, 0.5)
    per_coord = quad(lambda t: abs(t) / (2 * 0.5), -0.5, 0.5)[0]
    assert p.objective(p.center) == pytest.approx(16 * per_coord, abs=1e-12)
    assert p.opt_value == 4.0


def test_p1_objective_matches_expectation_by_quadrature():
    p = make_p1_nonsmooth(2, 1, 0.5, center=0.1)
    x = np.array([0.3, -0.7])
    ref = sum(quad(lambda t, xj=xj: abs(xj - t) / (2 * 0.5), 0.1 - 0.5, 0.1 + 0.5)[0] for xj in x)
    assert p.objective(x) == pytest.approx(ref, abs=1e-10)


def test_p1_constants():
    p = make_p1_nonsmooth(1, 1, 0.0, center=0.0)
    assert p.M == (1.0,)
    assert p.objective(np.array([0.7])) == pytest.approx(0.7)
    assert make_p1_nonsmooth(16, 4, 0.5).M == (2.0,) * 4
    assert p.tag == NONSMOOTH


def test_p2_reduces_and_keeps_minimizer():
    p1 = make_p1_nonsmooth(8, 2, 0.5, center=0.2)
    p0 = make_p2_strongly(8, 2, 0.5, 0.0, center=0.2)
    assert p0.M == p1.M and p0.opt_value == p1.opt_value and p0.tag == NONSMOOTH
    p2 = make_p2_strongly(8, 2, 0.5, 1.0, center=0.2)
    assert p2.tag == NONSMOOTH_STRONG and p2.mu == 1.0
    assert p2.opt_value == p1.opt_value
    assert p2.objective(p2.center) == pytest.approx(p2.opt_value)
    xi = p2.center.copy()
    assert p2.stoch_subgrad_block(p2.center, xi, 0).tolist() == [0.0] * 4


def test_p3_constants_and_reference_value():
    assert make_p3_composite(4, 2, 1.0, 0.0).L == (1.0, 1.0)
    p = make_p3_composite(2, 2, [1.0, 4.0], 0.0)
    assert p.L_bar == 4.0
    assert p.tag == COMPOSITE
    q = make_p3_composite(2, 2, [2.0, 2.0], [1.0, 1.0], lam=0.5)
    # minimizer of x^2 - x + 0.5|x| per coordinate is 0.25 with value -0.0625
    assert q.opt_value == pytest.approx(-0.125, abs=1e-10)
    np.testing.assert_allclose(q.x_star, [0.25, 0.25], atol=1e-8)
    assert make_p3_composite(2, 1, 1.0, 0.0, mu=1.0).tag == COMPOSITE_STRONG


def test_p3_unregularized_minimum():
    A = np.array([1.0, 2.0, 4.0])
    bvec = np.array([1.0, -1.0, 2.0])
    p = make_p3_composite(3, 1, A, bvec)
    x = bvec / A
    assert p.objective(x) == pytest.approx(-0.5 * float(bvec @ (bvec / A)))
    assert p.opt_value == pytest.approx(-0.5 * float(bvec @ (bvec / A)), abs=1e-9)


def test_p3_accepts_dense_blocks_and_rejects_indefinite():
    blocks = [np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([[1.0]])]
    p = make_p3_composite(3, 2, blocks, [1.0, 0.0, 1.0], lam=0.1)
    assert p.L[0] == pytest.approx(np.linalg.eigvalsh(blocks[0]).max())
    with pytest.raises(ParameterError):
        make_p3_composite(2, 1, [np.array([[1.0, 0.0], [0.0, -1.0]])], 0.0)


def test_reference_solution_is_a_fixed_point():
    p = make_p3_composite(6, 2, np.linspace(1, 3, 6), 1.5, lam=0.4, box=(-0.5, 0.5))
    x, phi = reference_solution(p)
    assert p.setup.contains(x)
    rng = np.random.default_rng(0)
    for _ in range(200):
        z = rng.uniform(-0.5, 0.5, 6)
        assert p.composite_objective(z) >= phi - 1e-10


def test_p4_values():
    p = make_p4_nonconvex(4, 2, lam=0.3)
    assert p.composite_objective(np.zeros(4)) == 0.0 == p.opt_value
    assert p.grad(np.array([1.0, 0.0, 0.0, 0.0]))[0] == pytest.approx(0.5)
    assert p.L == (2.0, 2.0) and p.tag == NONCONVEX


def test_p4_curvature_bound_by_finite_differences():
    p = make_p4_nonconvex(1, 1)
    t = np.linspace(-5, 5, 20001)
    h = 1e-5
    second = (p.grad(t + h) - p.grad(t - h)) / (2 * h)
    assert np.max(np.abs(second)) <= 2.0 + 1e-6
    assert np.max(np.abs(second)) >= 1.99


@pytest.mark.parametrize("name", ["p1", "p2", "p3", "p4"])
def test_block_estimator_unbiased(name):
    prob = zoo_instances()[name]
    rng = np.random.default_rng(11)
    for _ in range(2):
        assert block_estimator_zscores(prob, random_feasible(prob, rng), 20_000, rng).max() <= 4.0


@pytest.mark.parametrize("name", ["p3", "p4"])
def test_noise_variance_matches_sigma(name):
    prob = zoo_instances()[name]
    xis = prob.sample_batch(np.random.default_rng(5), 100_000)
    for i in range(prob.structure.b):
        sl = prob.structure.slice(i)
        assert np.mean(np.sum(xis[:, sl] ** 2, axis=1)) <= prob.sigma[i] ** 2 * 1.05


@pytest.mark.parametrize("name", ["p3", "p4"])
def test_gradient_matches_finite_differences(name):
    prob = zoo_instances()[name]
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = random_feasible(prob, rng)
        g = prob.grad(x)
        fd = np.array([(prob.objective(x + 1e-5 * e) - prob.objective(x - 1e-5 * e)) / 2e-5 for e in np.eye(len(x))])
        np.testing.assert_allclose(fd, g, rtol=1e-6, atol=1e-8)


def test_make_problem_dispatch():
    assert make_problem("p4", n=4, b=2).name == "p4"
    with pytest.raises(ParameterError):
        make_problem("p9")
