import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbmd.core import (
    BlockStructure, BlockVector, EntropySimplex, EuclideanBall, EuclideanBox, ProxSetup, SeparableRegularizer,
    block_norms, bregman, composite_prox_step, omega_range, prox_step,
)
from sbmd.errors import DimensionError, DomainError, ParameterError, UnsupportedCombinationError
from sbmd.verify import grid_points, prox_objective

# frozen with mpmath at 30 digits
KL_09_01 = 0.368064207168497069910682093234
LN4 = 1.38629436111989061883446424292


def single(geom):
    return ProxSetup(BlockStructure((geom.dim,)), (geom,))


# -- block structure ----------------------------------------------------------

def test_block_structure_offsets():
    s = BlockStructure((2, 3, 1))
    assert s.offsets == (0, 2, 5)
    assert s.n == 6 and s.b == 3
    assert s.slice(1) == slice(2, 5)


def test_block_structure_uniform_split():
    assert BlockStructure.uniform(10, 4).sizes == (3, 3, 2, 2)


@pytest.mark.parametrize("sizes", [(), (0, 2), (3, -1)])
def test_block_structure_rejects_bad_sizes(sizes):
    with pytest.raises(DimensionError):
        BlockStructure(sizes)


def test_block_index_out_of_range():
    with pytest.raises(DimensionError):
        BlockStructure((2, 2)).slice(2)


def test_block_vector_validates():
    s = BlockStructure((1, 2))
    v = BlockVector.from_blocks(s, [[1.0], [2.0, 3.0]])
    assert v.block(1).tolist() == [2.0, 3.0]
    with pytest.raises(DimensionError):
        BlockVector(s, np.zeros(4))
    with pytest.raises(DomainError):
        BlockVector(s, [0.0, np.nan, 1.0])
    with pytest.raises(ValueError):
        v.values[0] = 5.0


# -- geometries ---------------------------------------------------------------

def test_geometry_invariants():
    with pytest.raises(ParameterError):
        EuclideanBox([1.0], [0.0])
    with pytest.raises(ParameterError):
        EuclideanBall([0.0], 0.0)
    with pytest.raises(ParameterError):
        EntropySimplex(1)
    EuclideanBox([-np.inf], [np.inf])


def test_prox_setup_constants():
    s = BlockStructure((2, 2))
    box = ProxSetup.box(s, -1.0, 1.0)
    assert box.Q == 1.0 and box.D == (1.0, 1.0)
    assert ProxSetup.simplex(s).Q is None
    assert ProxSetup.box(s).D == (None, None)
    with pytest.raises(DimensionError):
        ProxSetup(s, (EuclideanBox.uniform(2),))


# -- bregman ------------------------------------------------------------------

def test_bregman_euclidean_example():
    assert bregman(single(EuclideanBox.uniform(2)), 0, [0, 0], [3, 4]) == 12.5


def test_bregman_entropy_examples():
    setup = single(EntropySimplex(2))
    assert bregman(setup, 0, [0.5, 0.5], [0.5, 0.5]) == 0.0
    assert bregman(setup, 0, [0.5, 0.5], [0.9, 0.1]) == pytest.approx(KL_09_01, abs=1e-14)


def test_bregman_domain_errors():
    with pytest.raises(DomainError):
        bregman(single(EuclideanBox.uniform(1, 0, 1)), 0, [0.5], [2.0])
    with pytest.raises(DomainError):
        bregman(single(EntropySimplex(2)), 0, [1.0, 0.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        bregman(single(EntropySimplex(2)), 0, [0.5, 0.5], [0.7, 0.7])


def _random_point(geom, rng):
    if isinstance(geom, EntropySimplex):
        return rng.dirichlet(np.ones(geom.dim))
    if isinstance(geom, EuclideanBall):
        d = rng.normal(size=geom.dim)
        return geom.center + d / np.linalg.norm(d) * geom.radius * rng.uniform()
    return rng.uniform(geom.lower, geom.upper)


GEOMS = [
    EuclideanBox.uniform(3, -1.0, 2.0),
    EuclideanBall(np.array([0.5, -0.5, 0.0]), 1.5),
    EntropySimplex(4),
]


@pytest.mark.parametrize("geom", GEOMS, ids=lambda g: g.kind)
def test_bregman_strong_convexity_modulus_one(geom):
    rng = np.random.default_rng(0)
    setup = single(geom)
    for _ in range(500):
        z, x = _random_point(geom, rng), _random_point(geom, rng)
        V = bregman(setup, 0, z, x)
        assert V >= 0.5 * geom.norm(x - z) ** 2 - 1e-12
        assert bregman(setup, 0, x, x) == 0.0 or abs(bregman(setup, 0, x, x)) < 1e-15


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_euclidean_bregman_is_half_squared_distance(z, x):
    z, x = np.array(z), np.array(x)
    V = bregman(single(EuclideanBox.uniform(2)), 0, z, x)
    assert V == 0.5 * float((x - z) @ (x - z))
    assert bregman(single(EuclideanBox.uniform(2)), 0, x, x) == 0.0


# -- prox ---------------------------------------------------------------------

def test_prox_box_clips():
    assert prox_step(single(EuclideanBox.uniform(1, 0, 1)), 0, [0.5], [2.0], 0.5).tolist() == [0.0]


def test_prox_simplex_zero_dual_is_fixed_point():
    out = prox_step(single(EntropySimplex(2)), 0, [0.5, 0.5], [0.0, 0.0], 3.7)
    assert out.tolist() == [0.5, 0.5]


def test_prox_box_2d_matches_grid():
    out = prox_step(single(EuclideanBox.uniform(2, -1, 1)), 0, [0.2, -0.3], [1.0, -2.0], 0.4)
    # grid argmin at resolution 1e-3 was (-0.2, 0.5)
    np.testing.assert_allclose(out, [-0.2, 0.5], atol=1e-3)


def test_prox_rejects_nonpositive_stepsize():
    with pytest.raises(ParameterError):
        prox_step(single(EuclideanBox.uniform(1)), 0, [0.0], [1.0], 0.0)


def test_entropy_prox_survives_overflow():
    out = prox_step(single(EntropySimplex(3)), 0, [0.2, 0.3, 0.5], [-1e6, 0.0, 1e6], 10.0)
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(1.0)


def test_entropy_prox_lifts_zero_coordinates():
    out = prox_step(single(EntropySimplex(3)), 0, [0.0, 0.5, 0.5], [0.0, 0.0, 0.0], 1.0)
    assert abs(out.sum() - 1.0) < 1e-12
    assert out[0] < 1e-299


def test_composite_prox_zero_weight_is_prox():
    setup = single(EuclideanBox.uniform(3, -1, 1))
    v, y = np.array([0.1, -0.4, 0.9]), np.array([0.3, 2.0, -1.0])
    assert np.array_equal(composite_prox_step(setup, 0, v, y, 0.7, 0.0), prox_step(setup, 0, v, y, 0.7))


def test_composite_prox_soft_threshold_unbounded():
    out = composite_prox_step(single(EuclideanBox.uniform(1)), 0, [1.0], [0.0], 1.0, 0.4)
    assert out[0] == pytest.approx(0.6, abs=1e-15)


def test_composite_prox_box_example_matches_grid():
    out = composite_prox_step(single(EuclideanBox.uniform(1, 0, 2)), 0, [0.3], [1.5], 1.0, 0.2)
    assert out.tolist() == [0.0]


def test_composite_prox_entropy_unsupported():
    with pytest.raises(UnsupportedCombinationError):
        composite_prox_step(single(EntropySimplex(2)), 0, [0.5, 0.5], [0.0, 0.0], 1.0, 0.1)


def test_composite_prox_offcentre_ball_unsupported():
    with pytest.raises(UnsupportedCombinationError):
        composite_prox_step(single(EuclideanBall([1.0, 0.0], 1.0)), 0, [1.0, 0.0], [0.0, 0.0], 1.0, 0.1)


@pytest.mark.parametrize("geom", GEOMS, ids=lambda g: g.kind)
def test_prox_beats_random_feasible_candidates(geom):
    rng = np.random.default_rng(1)
    setup = single(geom)
    for _ in range(20):
        v = _random_point(geom, rng)
        y = rng.uniform(-3, 3, geom.dim)
        gamma = float(rng.uniform(0.1, 3.0))
        u = prox_step(setup, 0, v, y, gamma)
        W = np.array([_random_point(geom, rng) for _ in range(1000)])
        assert prox_objective(geom, v, y, gamma, 0.0, u)[0] <= prox_objective(geom, v, y, gamma, 0.0, W).min() + 1e-9


@settings(max_examples=200)
@given(
    st.sampled_from(range(3)),
    st.integers(0, 2**32 - 1),
    st.floats(1e-3, 1e3),
)
def test_prox_output_feasible(which, seed, gamma):
    geom = GEOMS[which]
    rng = np.random.default_rng(seed)
    v = _random_point(geom, rng)
    y = rng.normal(scale=100.0, size=geom.dim)
    u = prox_step(single(geom), 0, v, y, gamma)
    assert geom.contains(u, 1e-12)
    if isinstance(geom, EntropySimplex):
        assert abs(u.sum() - 1.0) <= 1e-12


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(1e-2, 10.0))
def test_composite_zero_regularizer_bitwise(seed, gamma):
    rng = np.random.default_rng(seed)
    geom = EuclideanBall(rng.uniform(-1, 1, 3), 1.0)
    v = _random_point(geom, rng)
    y = rng.normal(size=3)
    setup = single(geom)
    assert np.array_equal(composite_prox_step(setup, 0, v, y, gamma), prox_step(setup, 0, v, y, gamma))


# -- omega range and norms ----------------------------------------------------

def test_omega_range_examples():
    assert omega_range(EuclideanBox.uniform(2, 0, 1)) == 1.0
    assert omega_range(EuclideanBox.uniform(1, -1, 1)) == 0.5
    assert omega_range(EntropySimplex(4)) == pytest.approx(LN4, abs=1e-15)
    assert omega_range(EuclideanBox.uniform(1)) is None


def test_omega_range_box_matches_grid():
    geom = EuclideanBox([-0.3, 0.2], [0.8, 0.9])
    P = grid_points(geom)
    w = 0.5 * np.sum(P * P, axis=1)
    assert omega_range(geom) == pytest.approx(w.max() - w.min(), abs=1e-12)


def test_omega_range_ball_formula():
    assert omega_range(EuclideanBall([3.0, 4.0], 1.0)) == pytest.approx(0.5 * 36 - 0.5 * 16)
    assert omega_range(EuclideanBall([0.0, 0.0], 2.0)) == pytest.approx(2.0)


def test_block_norms_examples():
    s1 = BlockStructure((2,))
    norms, agg = block_norms(BlockVector(s1, [3.0, 4.0]), ProxSetup.box(s1))
    assert norms.tolist() == [5.0] and agg == 5.0
    s2 = BlockStructure((1, 1))
    norms, agg = block_norms(BlockVector(s2, [3.0, 4.0]), ProxSetup.box(s2))
    assert norms.tolist() == [3.0, 4.0] and agg == 5.0
    norms, agg = block_norms(BlockVector(s1, [1.0, -2.0]), ProxSetup.simplex(s1), dual=True)
    assert norms.tolist() == [2.0] and agg == 2.0


def test_block_norms_structure_mismatch():
    with pytest.raises(DimensionError):
        block_norms(BlockVector(BlockStructure((2,)), [1.0, 1.0]), ProxSetup.box(BlockStructure((1, 1))))


def test_regularizer_value_and_validation():
    s = BlockStructure((1, 2))
    reg = SeparableRegularizer((0.5, 0.0))
    assert reg.value(s, [-2.0, 3.0, 4.0]) == 1.0
    with pytest.raises(ParameterError):
        SeparableRegularizer((-1.0,))
    with pytest.raises(ParameterError):
        SeparableRegularizer((math.inf,))
