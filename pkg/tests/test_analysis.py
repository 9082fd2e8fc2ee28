import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbmd.analysis import (
    BOUND_KINDS, BoundSpec, aggregate, bound_value, rate_fit, tail_bound, tail_threshold_nonsmooth,
)
from sbmd.errors import ParameterError
from sbmd.solvers import Checkpoint, RunRecord


def record(gaps, ks=None, N=None, seed=0):
    ks = ks or list(range(1, len(gaps) + 1))
    cps = [Checkpoint(k, g, None, k, 0.0) for k, g in zip(ks, gaps)]
    return RunRecord("sbmd", seed, N or ks[-1], cps, np.zeros(1), ks[-1], ks[-1], 0.0)


# -- bounds -------------------------------------------------------------------

def test_bound_nonsmooth_a_example():
    v = bound_value(BoundSpec("nonsmooth-a", b=2, D=(1, 1), M=(1, 1)), 8)
    assert v == pytest.approx(1.4142135623730951, abs=1e-15)


def test_bound_strongly_example():
    assert bound_value(BoundSpec("strongly", b=2, Q=1.0, mu=1.0, M=(1.0, 1.0)), 7) == pytest.approx(1.0, abs=1e-15)


def test_bound_nonconvex_det_example():
    assert bound_value(BoundSpec("nonconvex-det", b=1, L_bar=2.0, Delta=1.0), 100) == pytest.approx(0.04, abs=1e-15)


def test_bound_nonconvex_stoch_adds_noise_term():
    spec = BoundSpec("nonconvex-stoch", b=4, L_bar=2.0, Delta=1.0, sigma=1.0, T=8)
    assert bound_value(spec, 100) == pytest.approx(0.16 + 2.0)


def test_general_nonsmooth_b_meets_optimal_form_at_recommended_D_tilde():
    D, M, b = (0.5, 1.0, 2.0), (1.0, 2.0, 3.0), 3
    D_tilde = math.sqrt(sum(D))
    optimal = bound_value(BoundSpec("nonsmooth-b-optimalD", b=b, D=D, M=M), 50)
    # V <= sum D, with equality giving the largest general bound
    general = bound_value(BoundSpec("nonsmooth-b", b=b, M=M, V=sum(D), D_tilde=D_tilde), 50)
    assert general == pytest.approx(optimal, rel=1e-14)


def test_composite_bound_formula():
    spec = BoundSpec("composite", b=2, L_bar=1.0, Delta=1.0, V=1.0, sigma=1.0, D_tilde=1.0)
    assert bound_value(spec, 4) == pytest.approx(0.25 + 1.0 + math.sqrt(2) / 2 * 2)


def test_composite_strongly_bound_formula():
    spec = BoundSpec("composite-strongly", b=2, Q=1.0, mu=1.0, k0=8, Delta=1.0, V=1.0, sigma=1.0)
    assert bound_value(spec, 3) == pytest.approx(64 / 12 + 16 / 12 + 8 / 4)


def test_bound_errors():
    with pytest.raises(ParameterError):
        BoundSpec("strongly", b=2, Q=1.0, M=(1.0, 1.0))
    with pytest.raises(ParameterError):
        BoundSpec("strongly", b=2, Q=1.0, mu=0.0, M=(1.0, 1.0))
    with pytest.raises(ParameterError):
        BoundSpec("unknown")
    with pytest.raises(ParameterError):
        bound_value(BoundSpec("composite", b=2, L_bar=1.0, Delta=1.0, V=1.0, sigma=1.0, D_tilde=1.0), 1)


SPECS = [
    BoundSpec("nonsmooth-a", b=2, D=(1, 2), M=(1, 3)),
    BoundSpec("nonsmooth-b", b=2, M=(1, 3), V=0.5, D_tilde=2.0),
    BoundSpec("nonsmooth-b-optimalD", b=2, D=(1, 2), M=(1, 3)),
    BoundSpec("strongly", b=2, Q=1.5, mu=0.3, M=(1, 3)),
    BoundSpec("composite", b=3, L_bar=2.0, Delta=1.0, V=2.0, sigma=0.5, D_tilde=1.0),
    BoundSpec("composite-strongly", b=3, Q=1.0, mu=1.0, k0=24, Delta=1.0, V=2.0, sigma=0.5),
    BoundSpec("nonconvex-det", b=2, L_bar=2.0, Delta=1.0),
    BoundSpec("nonconvex-stoch", b=2, L_bar=2.0, Delta=1.0, sigma=0.5, T=4),
    BoundSpec("tail-nonsmooth", b=2, D=(1, 2), M=(1, 3), D_tilde=1.5, lam=2.0),
    BoundSpec("tail-strongly", b=2, Q=1.0, mu=1.0, D=(1, 2), M=(1, 3), lam=2.0),
]


def test_every_bound_kind_is_exercised():
    assert {s.kind for s in SPECS} == set(BOUND_KINDS)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
@given(N=st.integers(2, 10**6))
def test_bound_positive_and_decreasing(spec, N):
    a, b = bound_value(spec, N), bound_value(spec, N + 1)
    assert a > 0 and b > 0
    assert b <= a


# -- tails --------------------------------------------------------------------

def test_tail_bound_examples():
    assert tail_bound(1.0) == pytest.approx(1.0844107517452316, abs=1e-15)
    assert tail_bound(3.0) == pytest.approx(0.09957413673572789, abs=1e-15)
    with pytest.raises(ParameterError):
        tail_bound(0.0)


@given(st.floats(0.01, 50.0), st.floats(1e-3, 10.0))
def test_tail_bound_strictly_decreasing(lam, step):
    if tail_bound(lam) > 0:
        assert tail_bound(lam + step) < tail_bound(lam)


def test_tail_threshold_increases_with_lambda():
    ts = [tail_threshold_nonsmooth(4, (1.0,) * 4, (2.0,) * 4, 2.0, lam, 200) for lam in (1.0, 2.0, 3.0)]
    assert ts[0] < ts[1] < ts[2]


# -- aggregation --------------------------------------------------------------

def test_aggregate_two_point():
    s = aggregate([record([1.0]), record([3.0])])
    assert s.mean.tolist() == [2.0] and s.se.tolist() == [1.0]


def test_aggregate_identical_records_zero_se():
    s = aggregate([record([0.5, 0.2]), record([0.5, 0.2]), record([0.5, 0.2])])
    np.testing.assert_allclose(s.se, 0.0, atol=1e-15)
    assert s.index.tolist() == [1, 2]


def test_aggregate_median_within_quartile_band():
    rng = np.random.default_rng(0)
    recs = [record([float(u)]) for u in rng.uniform(0, 1, 50)]
    s = aggregate(recs, quantiles=(0.5,))
    assert 0.25 <= s.quantiles[0.5][0] <= 0.75


def test_aggregate_exceedance():
    recs = [record([g]) for g in (0.1, 0.2, 0.3, 0.4)]
    s = aggregate(recs, thresholds=(0.25,))
    assert s.exceedance[0.25].tolist() == [0.5]
    assert s.exceedance_se[0.25][0] == pytest.approx(0.25)


def test_aggregate_by_horizon():
    recs = [record([5.0, 1.0], N=10, ks=[1, 10]), record([5.0, 3.0], N=10, ks=[1, 10]),
            record([9.0], N=100, ks=[100]), record([7.0], N=100, ks=[100])]
    s = aggregate(recs, by="N")
    assert s.index.tolist() == [10, 100]
    assert s.mean.tolist() == [2.0, 8.0]


def test_aggregate_errors():
    with pytest.raises(ParameterError):
        aggregate([record([1.0])])
    with pytest.raises(ParameterError):
        aggregate([record([1.0], ks=[1]), record([1.0], ks=[2])])
    with pytest.raises(ParameterError):
        aggregate([record([1.0]), record([1.0])], metric="speed")


# -- rate fit -----------------------------------------------------------------

def test_rate_fit_exact_power_laws():
    N = np.array([100.0, 400.0, 1600.0])
    fit = rate_fit(N, 3.0 / np.sqrt(N))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.slope_se == pytest.approx(0.0, abs=1e-12)
    assert rate_fit(N, 2.0 / N).slope == pytest.approx(-1.0, abs=1e-12)


def test_rate_fit_clips_with_warning():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit = rate_fit([10.0, 100.0, 1000.0], [1e-3, 0.0, 0.0])
    assert fit.clipped
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


def test_rate_fit_preconditions():
    with pytest.raises(ParameterError):
        rate_fit([1.0, 10.0], [1.0, 0.1])
    with pytest.raises(ParameterError):
        rate_fit([1.0, 2.0, 4.0], [1.0, 0.5, 0.25])
