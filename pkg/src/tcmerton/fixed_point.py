"""Fixed-point construction of the equilibrium discount-rate field.

The operator F maps a candidate rate field phi(t, y) to a utility-
weighted average of the instantaneous discount rates rho_h(t, s),
s in [t, T].  The weights involve the y-derivative of the auxiliary
surfaces delta^phi(t, s, y), each solving a backward PDE in t with
terminal data U0 at s.  The equilibrium field rho_bar is the fixed
point phi = F[phi], found by damped Picard iteration.

The whole family {delta^phi(., s, .) : s on the time grid} shares one
tridiagonal factorization structure per time step, so it is marched in
a single backward sweep with all active terminal times batched as
right-hand-side columns; the integrals over s defining F (and, when
requested, the aggregated value surface and its discounting source
term) are accumulated on the fly.  Memory stays O(n_t * n_y).
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, IntegrityError, ModelError
from .grids import Grid, ScalarField2D, deriv_y
from .pde import BackwardStepper, terminal_log_slopes

logger = logging.getLogger(__name__)


class OperatorWorkspace:
    """Precomputed tables shared by repeated applications of F on one
    (market, utility, discount, grid) quadruple."""

    def __init__(self, market, utility, discount, grid: Grid, boundary="exp"):
        if abs(grid.T - market.T) > 1e-12 * max(1.0, market.T):
            raise ModelError("grid horizon %g does not match market T=%g"
                             % (grid.T, market.T))
        self.market = market
        self.utility = utility
        self.discount = discount
        self.grid = grid
        self.boundary = boundary
        t = grid.t_nodes
        tt, ss = np.meshgrid(t, t, indexing="ij")
        ss = np.maximum(ss, tt)  # only the triangle s >= t is ever used
        self.h_tab = np.asarray(discount.h(tt, ss), dtype=float)
        self.ht_tab = np.asarray(discount.dh_dt(tt, ss), dtype=float)
        self.U0 = np.asarray(utility.U0(grid.y_nodes), dtype=float)
        self.q_lo, self.q_hi = terminal_log_slopes(self.U0, grid.dy)

    def sweep(self, phi_values, want_F=True, want_G=False, want_rhs=False,
              keep_family=False):
        """One backward sweep of the delta family under the rate field
        phi_values (n_t, n_y).

        Returns a dict with any of:
          F        -- (n_t, n_y) values of F[phi]
          G        -- aggregated value surface sum of h-weighted deltas
          rhs      -- same aggregation with h_t weights (the source term
                      appearing in the equilibrium value equation)
          family   -- {n: (delta, delta_y)} where row k of delta is
                      delta(t_n, s_{n+k}, .)
        """
        g = self.grid
        market = self.market
        n_t, n_y = g.n_t, g.n_y
        dt, dy = g.dt, g.dy
        phi_values = np.asarray(phi_values, dtype=float)
        if phi_values.shape != (n_t, n_y):
            raise ModelError("phi must have shape (n_t, n_y)")
        half_theta2 = 0.5 * market.theta ** 2
        drift = phi_values - market.r - half_theta2
        stepper = BackwardStepper(g, half_theta2, drift,
                                  boundary=self.boundary,
                                  q_lo=self.q_lo, q_hi=self.q_hi)
        out = {}
        if want_F:
            out["F_num"] = np.empty((n_t, n_y))
            out["F_den"] = np.empty((n_t, n_y))
        if want_G:
            out["G"] = np.empty((n_t, n_y))
        if want_rhs:
            out["rhs"] = np.empty((n_t, n_y))
        if keep_family:
            out["family"] = {}

        def reduce(n, M):
            m = M.shape[0]
            hv = self.h_tab[n, n:]
            htv = self.ht_tab[n, n:]
            if m == 1:
                w = np.zeros(1)
            else:
                w = np.full(m, dt)
                w[0] *= 0.5
                w[-1] *= 0.5
            My = deriv_y(M, dy)
            if np.any(My >= 0):
                raise IntegrityError(
                    "delta_y lost its sign at time index %d; the grid is "
                    "too coarse or the y-range too wide" % n)
            if want_F:
                out["F_num"][n] = (w * htv) @ My + htv[-1] * My[-1]
                out["F_den"][n] = (w * hv) @ My + hv[-1] * My[-1]
            if want_G:
                out["G"][n] = (w * hv) @ M + hv[-1] * M[-1]
            if want_rhs:
                out["rhs"][n] = (w * htv) @ M + htv[-1] * M[-1]
            if keep_family:
                out["family"][n] = (M.copy(), My)

        M = self.U0[None, :].copy()
        reduce(n_t - 1, M)
        for n in range(n_t - 2, -1, -1):
            new = np.empty((M.shape[0] + 1, n_y))
            new[0] = self.U0
            # the column created one step ago takes its implicit-Euler
            # startup step; established columns run Crank-Nicolson
            new[1] = stepper.step_to(n, M[0], 1.0)
            if M.shape[0] > 1:
                new[2:] = stepper.step_to(n, M[1:], 0.5)
            M = new
            reduce(n, M)

        if want_F:
            if np.any(out["F_den"] >= 0):
                raise IntegrityError("F denominator must be negative")
            F = out["F_num"] / out["F_den"]
            lo, hi = self.discount.rho_bounds(g.T)
            slack = 1e-9 * max(1.0, abs(lo), abs(hi))
            if F.min() < lo - slack or F.max() > hi + slack:
                raise IntegrityError(
                    "F[phi] range [%g, %g] leaves the discount-rate range "
                    "[%g, %g]" % (F.min(), F.max(), lo, hi))
            out["F"] = F
        return out

    def apply_F(self, phi: ScalarField2D) -> ScalarField2D:
        return ScalarField2D(self.grid, self.sweep(phi.values)["F"])


def apply_F(phi, market, utility, discount, boundary="exp"):
    """One application of the discount-rate operator F to the field phi."""
    ws = OperatorWorkspace(market, utility, discount, phi.grid, boundary)
    return ws.apply_F(phi)


def solve_delta_family(market, utility, discount, grid, phi_values,
                       boundary="exp"):
    """All delta surfaces under the rate field phi, keyed by the index of
    the running time; used by the Monte Carlo cross-checks."""
    ws = OperatorWorkspace(market, utility, discount, grid, boundary)
    return ws.sweep(phi_values, want_F=False, keep_family=True)["family"]


def kappa_default(market, utility, discount, grid, boundary="exp"):
    """Default Lipschitz budget for the y-slope of rho_bar.

    The slope scale C0 is estimated empirically from F applied to the
    zero field, inflated by a factor 2; the budget is
    max(sup|rho_h|, 2 C0).  Overestimating kappa only widens the bound
    envelopes that are checked downstream, so the inflation is safe.
    """
    ws = OperatorWorkspace(market, utility, discount, grid, boundary)
    F0 = ws.sweep(np.zeros((grid.n_t, grid.n_y)))["F"]
    C0_est = 2.0 * float(np.max(np.abs(deriv_y(F0, grid.dy))))
    return max(discount.rho_norm(grid.T), 2.0 * C0_est)


@dataclass
class RhoField:
    """Converged equilibrium discount-rate field with iteration metadata."""

    phi: ScalarField2D
    residual_sup: float
    iterations: int
    residual_history: list = field(default_factory=list)
    kappa: float = 0.0

    @property
    def grid(self):
        return self.phi.grid

    @property
    def values(self):
        return self.phi.values

    def __call__(self, t, y):
        return self.phi(t, y)


def iterate(market, utility, discount, grid, tol=1e-8, max_iter=50,
            damping=1.0, boundary="exp", workspace=None):
    """Damped Picard iteration phi <- (1-d) phi + d F[phi] from phi = 0.

    Stops when sup|F[phi] - phi| + sup|d/dy (F[phi] - phi)| <= tol.  The
    damping factor is halved (down to 1/8) whenever the residual fails
    to decrease.  Raises ConvergenceError with the residual history on
    exhaustion of max_iter.
    """
    ws = workspace or OperatorWorkspace(market, utility, discount, grid,
                                        boundary)
    rho_norm = discount.rho_norm(grid.T)
    phi = np.zeros((grid.n_t, grid.n_y))
    history = []
    kappa = None
    for it in range(1, max_iter + 2):
        F = ws.sweep(phi)["F"]
        if kappa is None:
            C0_est = 2.0 * float(np.max(np.abs(deriv_y(F, grid.dy))))
            kappa = max(rho_norm, 2.0 * C0_est)
        diff = F - phi
        res = float(np.max(np.abs(diff))
                    + np.max(np.abs(deriv_y(diff, grid.dy))))
        history.append(res)
        logger.info("fixed-point iteration %d: residual %.3e (damping %g)",
                    it - 1, res, damping)
        if res <= tol:
            rho = RhoField(ScalarField2D(grid, phi), res, it - 1,
                           history, kappa)
            slope = float(np.max(np.abs(deriv_y(phi, grid.dy))))
            if slope > kappa:
                warnings.warn(
                    "equilibrium rate slope %.3g exceeds the budget "
                    "kappa=%.3g; bound envelopes may be unreliable"
                    % (slope, kappa))
            if float(np.max(np.abs(phi))) > rho_norm * (1 + 1e-9) + 1e-12:
                raise IntegrityError(
                    "equilibrium rate exceeds sup|rho_h|=%g" % rho_norm)
            return rho
        if len(history) > 1 and res >= history[-2]:
            damping = max(damping / 2.0, 0.125)
            logger.info("residual did not decrease; damping lowered to %g",
                        damping)
        phi = (1.0 - damping) * phi + damping * F
    raise ConvergenceError(
        "fixed-point iteration did not reach tol=%g in %d iterations "
        "(last residual %.3e)" % (tol, max_iter, history[-1]),
        history=history)
