import numpy as np
import pytest
from scipy.optimize import brentq

from tcmerton.errors import ModelError
from tcmerton.model import (CRRAUtility, CallableDiscount, ExponentialDiscount,
                            HyperbolicDiscount, MarketModel,
                            MixedPowerUtility, PseudoExponentialDiscount,
                            UtilityModel, elasticity_bounds)


def test_market_theta():
    m = MarketModel(r=0.03, mu=0.09, sigma=0.2, T=1.0)
    assert m.theta == pytest.approx((0.09 - 0.03) / 0.2)


@pytest.mark.parametrize("kw", [
    dict(r=0.03, mu=0.09, sigma=0.0, T=1.0),
    dict(r=0.03, mu=0.09, sigma=-0.1, T=1.0),
    dict(r=0.03, mu=0.09, sigma=0.2, T=0.0),
    dict(r=0.0, mu=0.09, sigma=0.2, T=1.0),
])
def test_market_validation(kw):
    with pytest.raises(ModelError):
        MarketModel(**kw)


# ---------------------------------------------------------------------------
# discount families
# ---------------------------------------------------------------------------

ALL_DISCOUNTS = [
    ExponentialDiscount(rho0=0.1),
    HyperbolicDiscount(alpha=1.0, beta=2.0),
    PseudoExponentialDiscount(weights=(0.3, 0.7), rates=(0.05, 0.4)),
]


@pytest.mark.parametrize("d", ALL_DISCOUNTS)
def test_discount_validate(d):
    d.validate(T=1.0)


@pytest.mark.parametrize("d", ALL_DISCOUNTS)
def test_rho_matches_finite_difference_of_h(d):
    # independent oracle: rho_h = h_t / h via central differencing in t
    rng = np.random.default_rng(0)
    t = rng.uniform(0.1, 0.8, 50)
    s = t + rng.uniform(0.05, 0.2, 50)
    eps = 1e-6
    fd = (d.h(t + eps, s) - d.h(t - eps, s)) / (2 * eps) / d.h(t, s)
    assert np.max(np.abs(d.rho(t, s) - fd)) < 1e-8


@pytest.mark.parametrize("d", ALL_DISCOUNTS)
def test_rho_bounds_cover_dense_sample(d):
    T = 1.0
    lo, hi = d.rho_bounds(T)
    t = np.linspace(0, T, 101)
    tt, ss = np.meshgrid(t, t, indexing="ij")
    mask = tt <= ss
    r = d.rho(tt[mask], ss[mask])
    assert r.min() >= lo - 1e-12
    assert r.max() <= hi + 1e-12


def test_hyperbolic_rho_closed_form():
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    # rho = alpha beta / (1 + beta tau)
    assert d.rho(0.2, 0.7) == pytest.approx(2.0 / (1 + 2 * 0.5))
    lo, hi = d.rho_bounds(1.0)
    assert lo == pytest.approx(2.0 / 3.0)
    assert hi == pytest.approx(2.0)


def test_rho_domain_check():
    d = ExponentialDiscount(rho0=0.1)
    with pytest.raises(ModelError):
        d.rho(0.5, 0.2)
    with pytest.raises(ModelError):
        d.rho(-0.1, 0.2)


def test_pseudo_exponential_weights_validation():
    with pytest.raises(ModelError):
        PseudoExponentialDiscount(weights=(0.5, 0.4), rates=(0.1, 0.2))
    with pytest.raises(ModelError):
        PseudoExponentialDiscount(weights=(1.5, -0.5), rates=(0.1, 0.2))


def test_callable_discount_wraps_exponential():
    rho0 = 0.15
    d = CallableDiscount(lambda t, s: np.exp(-rho0 * (np.asarray(s) - t)),
                         lambda t, s: rho0 * np.exp(-rho0 * (np.asarray(s) - t)))
    d.validate(T=1.0)
    lo, hi = d.rho_bounds(1.0)
    assert lo <= rho0 <= hi
    assert hi - lo < 0.2 * rho0  # only the 5% sampling margin


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------

def test_crra_closed_forms_match_generic_path():
    u = CRRAUtility(gamma=0.5)
    y = np.linspace(-3, 3, 31)
    # the generic UtilityModel route is an independent implementation
    gen = UtilityModel.__dict__
    assert np.allclose(u.I0(y), gen["I0"](u, y), rtol=1e-12)
    assert np.allclose(u.I0p(y), gen["I0p"](u, y), rtol=1e-12)
    assert np.allclose(u.U0(y), gen["U0"](u, y), rtol=1e-12)
    assert np.allclose(u.U0p(y), gen["U0p"](u, y), rtol=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 0.3, -1.0, -3.0])
def test_crra_validate_and_rra(gamma):
    u = CRRAUtility(gamma=gamma)
    u.validate()
    assert u.r1 == u.r2 == pytest.approx(1 - gamma)


def test_crra_rejects_bad_gamma():
    for gamma in (1.0, 1.5, 0.0):
        with pytest.raises(ModelError):
            CRRAUtility(gamma=gamma)


def test_mixed_power_inverse_marginal():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    u.validate()
    w = np.geomspace(1e-5, 1e5, 200)
    x = u.I(w)
    assert np.max(np.abs(u.Uprime(x) - w) / w) < 1e-10


def test_mixed_power_inverse_against_brentq():
    # independent root-finding oracle for I at fixed probes
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    for w in (0.01, 0.5, 1.0, 3.0, 100.0):
        ref = brentq(lambda x: u.Uprime(x) - w, 1e-12, 1e12, xtol=1e-15,
                     rtol=1e-14)
        assert u.I(w) == pytest.approx(ref, rel=1e-10)


def test_mixed_power_rra_bounds():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    assert u.r1 == pytest.approx(0.7)
    assert u.r2 == pytest.approx(2.0)
    x = np.geomspace(1e-4, 1e4, 100)
    rra = -x * u.Uprime2(x) / u.Uprime(x)
    assert np.all(rra >= u.r1 - 1e-12)
    assert np.all(rra <= u.r2 + 1e-12)


def test_utility_positive_domain():
    u = CRRAUtility(gamma=0.5)
    with pytest.raises(ModelError):
        u.U(-1.0)
    with pytest.raises(ModelError):
        u.I(0.0)


def test_exp_overflow_guard():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    with pytest.raises(ModelError):
        u.I0(800.0)


def test_u0p_negative():
    for u in (CRRAUtility(gamma=0.5),
              MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)):
        y = np.linspace(-5, 5, 41)
        assert np.all(u.U0p(y) < 0)
        assert np.all(u.I0p(y) < 0)


def test_u0_derivative_consistency():
    # U0'(y) must be the actual derivative of U0
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    y = np.linspace(-4, 4, 33)
    eps = 1e-6
    fd = (u.U0(y + eps) - u.U0(y - eps)) / (2 * eps)
    assert np.max(np.abs(u.U0p(y) - fd) / np.abs(fd)) < 1e-8


def test_elasticity_bounds():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    lo, hi = elasticity_bounds(u, kappa=0.0, t=0.0, T=1.0)
    assert lo == pytest.approx(u.r1)
    assert hi == pytest.approx(u.r2)
    lo, hi = elasticity_bounds(u, kappa=0.5, t=0.0, T=1.0)
    assert lo == pytest.approx(u.r1 * np.exp(-0.5))
    assert hi == pytest.approx(u.r2 * np.exp(0.5))
    with pytest.raises(ModelError):
        elasticity_bounds(u, kappa=-1.0, t=0.0, T=1.0)
    with pytest.raises(ModelError):
        elasticity_bounds(u, kappa=0.1, t=2.0, T=1.0)
