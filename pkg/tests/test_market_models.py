import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gmwb.market_models import (
    BsmParams,
    EstimationError,
    MmmParams,
    ModelKind,
    RiskFactorState,
    SingularDiscountError,
    bsm_transition,
    estimate_bsm,
    estimate_mmm,
    index_ratio,
    mmm_index_level,
    mmm_transition,
    sdf,
    simulate_paths,
)
from gmwb.series import PriceSeries


def _quad(f, law):
    m, sd = law.mean, math.sqrt(law.variance)
    edges = [0.0, max(m - 6 * sd, 0.0), m, m + 6 * sd, math.inf]
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0] for a, b in zip(edges, edges[1:]) if b > a)


# -- parameter types ------------------------------------------------------------


def test_parameter_validation():
    with pytest.raises(ValueError):
        MmmParams(0.0, 0.05)
    with pytest.raises(ValueError):
        MmmParams(1.0, -0.01)
    with pytest.raises(ValueError):
        BsmParams(-0.1)
    assert MmmParams(1.0, 0.05).kind is ModelKind.MMM
    with pytest.raises(ValueError):
        RiskFactorState(ModelKind.MMM, -1.0, 0.0)


# -- MMM transition ---------------------------------------------------------------


@pytest.mark.parametrize("y_t, dt", [(1.0, 1.0), (0.3, 1.0), (2.5, 0.25), (1.0, 10.0), (0.05, 1 / 12)])
def test_mmm_transition_moments_by_quadrature(mmm, y_t, dt):
    law = mmm_transition(mmm, y_t, 0.0, dt)
    assert _quad(law.density, law) == pytest.approx(1.0, abs=1e-8)
    mean = _quad(lambda y: y * law.density(y), law)
    assert mean == pytest.approx(1 - math.exp(-mmm.eta * dt) * (1 - y_t), rel=1e-6)
    second = _quad(lambda y: y * y * law.density(y), law)
    assert second - mean**2 == pytest.approx(law.variance, rel=1e-5)


def test_mmm_mean_is_one_at_unit_level(mmm):
    law = mmm_transition(mmm, 1.0, 0.0, 1.0)
    assert law.mean == 1.0
    assert law.scale == pytest.approx((1 - math.exp(-0.0435)) / 4, rel=1e-15)
    assert law.zeta == pytest.approx(4 * math.exp(-0.0435) / (1 - math.exp(-0.0435)), rel=1e-14)


def test_mmm_mean_limits(mmm):
    assert mmm_transition(mmm, 3.0, 0.0, 1e-9).mean == pytest.approx(3.0, rel=1e-9)
    assert mmm_transition(mmm, 3.0, 0.0, 2000.0).mean == pytest.approx(1.0, rel=1e-12)


def test_mmm_transition_needs_forward_horizon(mmm):
    with pytest.raises(ValueError):
        mmm_transition(mmm, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("y_t, dt", [(1.0, 1.0), (0.2, 1.0), (3.0, 0.5), (1.0, 30.0)])
def test_mmm_discounted_mass_is_supermartingale_closed_form(mmm, y_t, dt):
    law = mmm_transition(mmm, y_t, 0.0, dt)
    e = math.exp(-mmm.eta * dt)
    closed = 1 - math.exp(-2 * e * y_t / (1 - e))
    by_quad = _quad(lambda y: e * y_t / y * law.density(y), law)
    assert by_quad == pytest.approx(closed, abs=1e-6)
    assert law.discounted_mass == pytest.approx(closed, rel=1e-14)
    assert _quad(law.discounted_density, law) == pytest.approx(closed, abs=1e-9)
    assert closed <= 1
    if dt >= 30:
        assert closed < 1 - 1e-3  # visibly strict over long horizons


def test_mmm_discounted_tail_functions(mmm):
    law = mmm_transition(mmm, 0.7, 0.0, 2.0)
    for y in (0.2, 0.7, 1.5):
        upper = integrate.quad(law.discounted_density, y, math.inf, epsrel=1e-12)[0]
        assert law.discounted_sf(y) == pytest.approx(upper, rel=1e-9)
        assert law.discounted_cdf(y) == pytest.approx(law.discounted_mass - upper, rel=1e-9)


# -- BSM transition ---------------------------------------------------------------


def test_bsm_moments():
    law = bsm_transition(BsmParams(0.1441), 1.0, 0.0, 1.0)
    assert law.mean == pytest.approx(1.02098, abs=5e-6)
    assert law.median == pytest.approx(math.exp(0.5 * 0.1441**2), rel=1e-15)
    assert _quad(law.density, law) == pytest.approx(1.0, abs=1e-8)
    assert _quad(lambda s: s * law.density(s), law) == pytest.approx(law.mean, rel=1e-8)


def test_bsm_zero_volatility_is_deterministic(rng):
    law = bsm_transition(BsmParams(0.0), 2.0, 0.0, 5.0)
    assert np.all(law.sample(rng, 100) == 2.0)


def test_bsm_martingale_sdf_by_monte_carlo(rng):
    law = bsm_transition(BsmParams(0.3), 1.0, 0.0, 2.0)
    d = 1.0 / law.sample(rng, 400_000)
    assert abs(d.mean() - 1) < 3 * d.std() / math.sqrt(d.size)


# -- discount factors ---------------------------------------------------------------


def test_sdf_identity_and_algebra(mmm):
    s = RiskFactorState(ModelKind.MMM, 1.3, 2.0)
    assert sdf(mmm, s, s) == 1.0
    m = MmmParams(1.0, 0.05)
    assert sdf(m, RiskFactorState(ModelKind.MMM, 1.0, 0.0), RiskFactorState(ModelKind.MMM, 1.0, 1.0)) == pytest.approx(
        math.exp(-0.05), rel=1e-15)
    b = BsmParams(0.2)
    assert sdf(b, RiskFactorState(ModelKind.BSM, 2.0, 0.0), RiskFactorState(ModelKind.BSM, 4.0, 1.0)) == 0.5


def test_sdf_singular_at_zero(mmm):
    with pytest.raises(SingularDiscountError):
        sdf(mmm, RiskFactorState(ModelKind.MMM, 1.0, 0.0), RiskFactorState(ModelKind.MMM, 0.0, 1.0))


def test_sdf_matches_index_level_ratio():
    m = MmmParams(2.0, 0.04)
    y_t, y_u, t, u = 0.8, 1.4, 3.0, 4.5
    s_t, s_u = mmm_index_level(m, y_t, t), mmm_index_level(m, y_u, u)
    st_ = RiskFactorState(ModelKind.MMM, y_t, t)
    su = RiskFactorState(ModelKind.MMM, y_u, u)
    assert sdf(m, st_, su) == pytest.approx(s_t / s_u, rel=1e-14)
    assert index_ratio(m, y_t, y_u, u - t) == pytest.approx(s_u / s_t, rel=1e-14)


@settings(max_examples=60)
@given(
    st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.05, 5),
    st.floats(0.01, 3), st.floats(0.01, 3),
)
def test_sdf_composes_multiplicatively(y1, y2, y3, d1, d2):
    m = MmmParams(1.0, 0.0435)
    a = RiskFactorState(ModelKind.MMM, y1, 0.0)
    b = RiskFactorState(ModelKind.MMM, y2, d1)
    c = RiskFactorState(ModelKind.MMM, y3, d1 + d2)
    assert sdf(m, a, b) * sdf(m, b, c) == pytest.approx(sdf(m, a, c), rel=1e-12)


# -- estimation ---------------------------------------------------------------------


def _series(t, s):
    return PriceSeries(np.asarray(t, dtype=float), np.asarray(s, dtype=float))


def test_estimate_mmm_recovers_exact_exponential():
    t = np.arange(0, 20, 1 / 12)
    fit = estimate_mmm(_series(t, 2 * np.exp(0.05 * t)))
    assert fit.params.eta == pytest.approx(0.05, rel=1e-12)
    assert fit.params.alpha0 == pytest.approx(0.1, rel=1e-12)
    assert np.allclose(fit.normalized, 1.0, rtol=1e-12)


@given(st.floats(1e-3, 1e3))
@settings(max_examples=25)
def test_estimate_mmm_scale_equivariance(k):
    t = np.linspace(0, 10, 61)
    s = np.exp(0.03 * t + 0.1 * np.sin(3 * t))
    a, b = estimate_mmm(_series(t, s)), estimate_mmm(_series(t, k * s))
    assert b.params.eta == pytest.approx(a.params.eta, rel=1e-9)
    assert b.params.alpha0 == pytest.approx(k * a.params.alpha0, rel=1e-9)
    assert np.allclose(b.normalized, a.normalized, rtol=1e-9)


def test_estimate_errors():
    with pytest.raises(EstimationError):
        estimate_mmm(_series([0.0, 1.0], [1.0, 2.0]))
    t = np.arange(10.0)
    with pytest.raises(EstimationError):
        estimate_mmm(_series(t, np.exp(-0.02 * t)))


def test_estimate_bsm_deterministic_series_has_zero_vol():
    t = np.arange(0, 5, 1 / 12)
    assert estimate_bsm(_series(t, np.exp(0.07 * t))).sigma == pytest.approx(0.0, abs=1e-7)


def test_estimate_bsm_alternating_returns():
    r = np.tile([0.04, -0.04], 60)
    t = np.arange(r.size + 1) / 12
    s = np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    assert estimate_bsm(_series(t, s)).sigma == pytest.approx(0.04 * math.sqrt(12), rel=1e-12)


def test_estimate_bsm_recovers_simulated_vol(rng):
    sigma, dt = 0.15, 1 / 12
    r = 0.5 * sigma**2 * dt + sigma * math.sqrt(dt) * rng.standard_normal(6000)
    t = np.arange(r.size + 1) * dt
    est = estimate_bsm(_series(t, np.exp(np.concatenate([[0.0], np.cumsum(r)]))))
    assert est.sigma == pytest.approx(sigma, rel=0.03)


# -- simulation ---------------------------------------------------------------------


def test_simulate_initial_only(mmm):
    p = simulate_paths(mmm, RiskFactorState(ModelKind.MMM, 1.0, 0.0), [], 1, seed=0)
    assert p.shape == (1, 1) and p[0, 0] == 1.0


def test_simulate_reproducible(mmm):
    init = RiskFactorState(ModelKind.MMM, 0.9, 0.0)
    a = simulate_paths(mmm, init, [0.5, 1.0, 3.0], 1000, seed=7)
    b = simulate_paths(mmm, init, [0.5, 1.0, 3.0], 1000, seed=7)
    assert np.array_equal(a, b)


def test_simulate_mmm_mean(mmm):
    p = simulate_paths(mmm, RiskFactorState(ModelKind.MMM, 0.6, 0.0), [2.0], 1_000_000, seed=3)[:, 1]
    m = mmm_transition(mmm, 0.6, 0.0, 2.0).mean
    assert abs(p.mean() - m) < 3 * p.std() / math.sqrt(p.size)


def test_simulate_bsm_mean():
    b = BsmParams(0.25)
    p = simulate_paths(b, RiskFactorState(ModelKind.BSM, 1.0, 0.0), [1.5], 1_000_000, seed=4)[:, 1]
    assert abs(p.mean() - math.exp(0.25**2 * 1.5)) < 3 * p.std() / math.sqrt(p.size)


def test_simulate_rejects_bad_dates(mmm):
    with pytest.raises(ValueError):
        simulate_paths(mmm, RiskFactorState(ModelKind.MMM, 1.0, 0.0), [1.0, 1.0], 10, seed=0)
    with pytest.raises(ValueError):
        simulate_paths(mmm, RiskFactorState(ModelKind.MMM, 1.0, 0.0), [1.0], 0, seed=0)
