import numpy as np
import pytest

from tcmerton.errors import ConvergenceError, ModelError
from tcmerton.fixed_point import (OperatorWorkspace, apply_F, iterate,
                                  kappa_default, solve_delta_family)
from tcmerton.grids import Grid, ScalarField2D
from tcmerton.model import (CRRAUtility, CallableDiscount,
                            ExponentialDiscount, HyperbolicDiscount,
                            MarketModel, MixedPowerUtility,
                            PseudoExponentialDiscount)

MARKET = MarketModel(r=0.03, mu=0.09, sigma=0.2, T=1.0)


def small_grid(n_t=81, n_y=81, lim=4.0):
    return Grid.regular(MARKET.T, -lim, lim, n_t, n_y)


def flat_rate_oracle(market, gamma, disc, n=2001, tol=1e-13):
    """Independent 1-d fixed-point solver for CRRA utility.

    For constant-elasticity utility the auxiliary surfaces factor as
    U0(y) times a y-independent weight, so the operator reduces to a
    one-dimensional Picard iteration on flat rate functions which can
    be solved by dense quadrature with no PDE at all.
    """
    T = market.T
    s = np.linspace(0, T, n)
    ds = s[1] - s[0]
    q = gamma / (gamma - 1.0)
    phi = np.zeros(n)
    for _ in range(200):
        lam = (0.5 * market.theta ** 2 * q * q
               + (phi - market.r - 0.5 * market.theta ** 2) * q)
        Lam = np.concatenate(
            [[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * ds)])
        E = np.exp(Lam)
        F = np.empty(n)
        for i in range(n):
            ss = s[i:]
            w = E[i:] / E[i]
            ht = disc.dh_dt(s[i], ss)
            h = disc.h(s[i], ss)
            if len(ss) == 1:
                num, den = ht[-1] * w[-1], h[-1] * w[-1]
            else:
                tw = np.full(len(ss), ds)
                tw[0] *= 0.5
                tw[-1] *= 0.5
                num = np.sum(tw * ht * w) + ht[-1] * w[-1]
                den = np.sum(tw * h * w) + h[-1] * w[-1]
            F[i] = num / den
        if np.max(np.abs(F - phi)) < tol:
            break
        phi = F
    return s, F


def test_apply_F_constant_rate_is_exact():
    # with exponential discounting every weighted average of rho_h
    # collapses to rho0, independent of the candidate field
    u = CRRAUtility(gamma=0.5)
    d = ExponentialDiscount(rho0=0.1)
    g = small_grid()
    F0 = apply_F(ScalarField2D.constant(g, 0.0), MARKET, u, d)
    assert np.max(np.abs(F0.values - 0.1)) < 1e-12


def test_iterate_exponential_converges_in_one_iteration():
    u = CRRAUtility(gamma=0.5)
    d = ExponentialDiscount(rho0=0.1)
    rho = iterate(MARKET, u, d, small_grid())
    assert rho.iterations == 1
    assert rho.residual_sup < 1e-12
    assert np.max(np.abs(rho.values - 0.1)) < 1e-12


def test_iterate_unit_discount_zero_iterations():
    # h identically one has rho_h = 0 and the zero start is already the
    # fixed point
    ones = lambda t, s: np.ones_like(np.asarray(s, dtype=float) - t)
    zeros = lambda t, s: np.zeros_like(np.asarray(s, dtype=float) - t)
    d = CallableDiscount(ones, zeros)
    rho = iterate(MARKET, CRRAUtility(gamma=0.5), d, small_grid())
    assert rho.iterations == 0
    assert np.max(np.abs(rho.values)) == 0.0


def test_crra_rate_field_is_flat_in_y():
    u = CRRAUtility(gamma=0.5)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    rho = iterate(MARKET, u, d, small_grid(121, 121))
    spread = np.max(rho.values.max(axis=1) - rho.values.min(axis=1))
    assert spread < 1e-10


@pytest.mark.parametrize("disc", [
    HyperbolicDiscount(alpha=1.0, beta=2.0),
    PseudoExponentialDiscount(weights=(0.3, 0.7), rates=(0.05, 0.4)),
])
def test_crra_rate_matches_one_dimensional_oracle(disc):
    u = CRRAUtility(gamma=0.5)
    g = Grid.regular(MARKET.T, -4, 4, 201, 201)
    rho = iterate(MARKET, u, disc, g)
    s, F = flat_rate_oracle(MARKET, 0.5, disc)
    ref = np.interp(g.t_nodes, s, F)
    assert np.max(np.abs(rho.values[:, g.n_y // 2] - ref)) < 2e-4


def test_rate_field_within_discount_rate_range():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    rho = iterate(MARKET, u, d, small_grid(121, 121, lim=5.0))
    lo, hi = d.rho_bounds(MARKET.T)
    assert rho.values.min() >= lo - 1e-9
    assert rho.values.max() <= hi + 1e-9
    assert rho.residual_sup <= 1e-8


def test_residual_history_monotone_after_first():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    rho = iterate(MARKET, u, d, small_grid(81, 81, lim=5.0))
    h = rho.residual_history
    assert all(h[i + 1] < h[i] for i in range(len(h) - 1))


def test_convergence_error_carries_history():
    u = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    with pytest.raises(ConvergenceError) as err:
        iterate(MARKET, u, d, small_grid(81, 81, lim=5.0), max_iter=2)
    assert len(err.value.history) >= 2


def test_iterate_with_damping_still_converges():
    u = CRRAUtility(gamma=0.5)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    rho = iterate(MARKET, u, d, small_grid(), damping=0.5, max_iter=100)
    assert rho.residual_sup <= 1e-8


def test_kappa_default():
    g = small_grid()
    u = CRRAUtility(gamma=0.5)
    d = ExponentialDiscount(rho0=0.1)
    # flat F[0] means no slope contribution: kappa = sup |rho_h|
    assert kappa_default(MARKET, u, d, g) == pytest.approx(0.1)
    um = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
    dh = HyperbolicDiscount(alpha=1.0, beta=2.0)
    assert kappa_default(MARKET, um, dh, small_grid(81, 81, 5.0)) >= 2.0


def test_delta_family_structure():
    u = CRRAUtility(gamma=0.5)
    d = HyperbolicDiscount(alpha=1.0, beta=2.0)
    g = small_grid(21, 41)
    fam = solve_delta_family(MARKET, u, d, g,
                             np.zeros((g.n_t, g.n_y)))
    assert set(fam) == set(range(g.n_t))
    U0 = u.U0(g.y_nodes)
    for n, (delta, delta_y) in fam.items():
        assert delta.shape == (g.n_t - n, g.n_y)
        assert np.allclose(delta[0], U0)      # own-terminal row
        assert np.all(delta_y < 0)


def test_workspace_rejects_mismatched_horizon():
    g = Grid.regular(2.0, -4, 4, 11, 11)
    with pytest.raises(ModelError):
        OperatorWorkspace(MARKET, CRRAUtility(gamma=0.5),
                          ExponentialDiscount(rho0=0.1), g)
