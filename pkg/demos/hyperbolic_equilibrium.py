"""Hyperbolic discounting with mixed-power utility.

The interesting regime: a non-constant discount rate makes the naive
dynamically-programmed strategy time-inconsistent.  The pipeline finds
the time-consistent (subgame perfect) feedback controls by iterating
the utility-weighted discount-rate operator to its fixed point.  This
script shows the iteration history, the shape of the converged rate
field rho_bar(t, y), and how the equilibrium consumption differs from
the constant-rate strategies at the two extremes of the rate range.

Run:  python3 demos/hyperbolic_equilibrium.py
"""

import numpy as np

from tcmerton import (Grid, HyperbolicDiscount, MarketModel,
                      MixedPowerUtility, solve)

market = MarketModel(r=0.03, mu=0.09, sigma=0.2, T=1.0)
utility = MixedPowerUtility(alpha=0.5, gamma1=0.3, gamma2=-1.0)
discount = HyperbolicDiscount(alpha=1.0, beta=2.0)
grid = Grid.regular(market.T, -5.0, 5.0, 201, 201)

res = solve(market, utility, discount, grid)
print("converged in %d iterations" % res.rho.iterations)
print("residual history:")
for k, r in enumerate(res.rho.residual_history):
    print("  iter %2d   residual %.3e" % (k, r))

lo, hi = discount.rho_bounds(market.T)
print("\ninstantaneous rate range  [%.4f, %.4f]" % (lo, hi))
print("converged rho_bar range   [%.4f, %.4f]"
      % (res.rho.values.min(), res.rho.values.max()))

# rho_bar varies in both t and y for non-CRRA utility
print("\nrho_bar(t, y):")
print("   t \\ y   " + "".join("%8.1f" % y for y in (-3, -1, 0, 1, 3)))
for t in (0.0, 0.5, 0.9):
    row = [float(res.rho(t, y)) for y in (-3, -1, 0, 1, 3)]
    print("   %.1f    %s" % (t, "".join("%8.4f" % v for v in row)))

# equilibrium consumption vs the constant-rate extremes: the
# equilibrium lies strictly between the impatient (rate = hi) and
# patient (rate = lo) constant-rate solutions
from tcmerton import ExponentialDiscount

print("\nconsumption fraction at (t = 0, y = 0):")
c_eq = float(res.strategy.c_at(0.0, np.array([0.0]))[0])
for label, rate in (("patient  (rate %.3f)" % lo, lo),
                    ("impatient(rate %.3f)" % hi, hi)):
    r_const = solve(market, utility, ExponentialDiscount(rho0=rate), grid)
    c = float(r_const.strategy.c_at(0.0, np.array([0.0]))[0])
    print("  %s : c = %.5f" % (label, c))
print("  equilibrium          : c = %.5f" % c_eq)
