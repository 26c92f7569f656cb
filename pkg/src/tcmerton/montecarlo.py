"""Monte Carlo companions to the PDE pipeline.

All simulations share one driving process: the log marginal value
Y satisfies

    dY_s = (phi(s, Y_s) - r - theta^2/2) ds - theta dW_s

which for phi = rho_bar is the equilibrium state process, and the
equilibrium wealth path is recovered from the identity X_s =
pbar(s, Y_s).  Estimators never store full increment arrays: Brownian
increments are generated in fixed-size blocks from a counter-keyed
generator, so two simulations with the same seed, path count and step
count consume identical increments (common random numbers) without any
storage.  Antithetic pairing interleaves each draw with its negation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .grids import deriv_y, bilinear

_BLOCK = 4096  # paths per generator block; even, so antithetic pairs
               # never straddle a block boundary


def _blocks(n_paths, n_steps, seed, antithetic):
    """Yield (path slice, standard-normal increments) block by block."""
    start = 0
    b = 0
    while start < n_paths:
        m = min(_BLOCK, n_paths - start)
        rng = np.random.default_rng([int(seed), b])
        if antithetic:
            z = rng.standard_normal((m // 2, n_steps))
            dw = np.empty((m, n_steps))
            dw[0::2] = z
            dw[1::2] = -z
        else:
            dw = rng.standard_normal((m, n_steps))
        yield slice(start, start + m), dw
        b += 1
        start += m


def _check_paths(n_paths, antithetic):
    if n_paths < 2:
        raise ModelError("need at least 2 paths")
    if antithetic and n_paths % 2:
        raise ModelError("antithetic sampling needs an even path count")


def _mean_se(per_path, antithetic):
    """Mean and standard error; antithetic pairs are averaged first."""
    a = np.asarray(per_path, dtype=float)
    if antithetic:
        a = 0.5 * (a[0::2] + a[1::2])
    n = len(a)
    return float(a.mean()), float(a.std(ddof=1) / np.sqrt(n))


@dataclass
class PathEnsemble:
    """Recorded state paths with coverage bookkeeping."""

    times: np.ndarray
    Y: np.ndarray              # (n_paths, len(times))
    X: np.ndarray = None       # wealth, present for joint simulations
    exited: np.ndarray = None  # paths that left the y-grid at some step
    seed: int = 0
    antithetic: bool = True

    @property
    def n_paths(self):
        return self.Y.shape[0]

    @property
    def exit_fraction(self):
        return float(np.mean(self.exited)) if self.exited is not None else 0.0


@dataclass
class MCEstimate:
    value: float
    se: float
    n_paths: int
    exit_fraction: float = 0.0


def _record_indices(n_steps, stride):
    idx = list(range(0, n_steps + 1, max(int(stride), 1)))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.asarray(idx)


class _Driver:
    """Euler stepping of Y under a rate field phi (RhoField,
    ScalarField2D or None for the zero field)."""

    def __init__(self, market, phi, t0, n_steps):
        self.market = market
        self.phi = phi
        self.t0 = float(t0)
        if not 0 <= t0 < market.T:
            raise ModelError("t0 must lie in [0, T)")
        self.n_steps = int(n_steps)
        if self.n_steps < 1:
            raise ModelError("need at least one time step")
        self.dt = (market.T - t0) / self.n_steps
        if phi is not None:
            g = phi.grid
            self.y_lo, self.y_hi = float(g.y_nodes[0]), float(g.y_nodes[-1])
        else:
            self.y_lo, self.y_hi = -np.inf, np.inf

    def rate(self, t, y):
        return 0.0 if self.phi is None else self.phi(t, y)

    def drift(self, t, y):
        m = self.market
        return self.rate(t, y) - m.r - 0.5 * m.theta ** 2

    def time(self, k):
        return self.t0 + k * self.dt


def simulate_Y(market, rho, y0, t0=0.0, n_steps=200, n_paths=10000,
               seed=0, antithetic=True, record_stride=1):
    """Paths of the state process started at Y_{t0} = y0."""
    _check_paths(n_paths, antithetic)
    drv = _Driver(market, rho, t0, n_steps)
    rec = _record_indices(n_steps, record_stride)
    out = np.empty((n_paths, len(rec)))
    exited = np.zeros(n_paths, dtype=bool)
    sdt = np.sqrt(drv.dt)
    for sl, dw in _blocks(n_paths, n_steps, seed, antithetic):
        y = np.full(sl.stop - sl.start, float(y0))
        pos = 0
        if rec[0] == 0:
            out[sl, 0] = y
            pos = 1
        for k in range(n_steps):
            t = drv.time(k)
            y = y + drv.drift(t, y) * drv.dt - market.theta * sdt * dw[:, k]
            exited[sl] |= (y < drv.y_lo) | (y > drv.y_hi)
            if pos < len(rec) and rec[pos] == k + 1:
                out[sl, pos] = y
                pos += 1
    times = drv.time(rec)
    return PathEnsemble(times, out, None, exited, seed, antithetic)


def simulate_wealth(market, rho, strategy, pbar, x0, t0=0.0, n_steps=200,
                    n_paths=10000, seed=0, antithetic=True, record_stride=1,
                    controls=None):
    """Joint paths of (Y, X) under feedback controls.

    X follows a log-Euler step, so wealth stays positive and the
    uninvested no-consumption control (pi = c = 0) compounds at
    exactly e^{r t}.  ``controls`` overrides the strategy surface:
    a callable (t, y_array) -> (pi_array, c_array) with c the
    consumption fraction of wealth.
    """
    _check_paths(n_paths, antithetic)
    drv = _Driver(market, rho, t0, n_steps)
    if controls is None:
        controls = lambda t, y: (strategy.pi_at(t, y), strategy.c_at(t, y))
    y0 = pbar.invert(t0, x0)
    rec = _record_indices(n_steps, record_stride)
    Y = np.empty((n_paths, len(rec)))
    X = np.empty((n_paths, len(rec)))
    exited = np.zeros(n_paths, dtype=bool)
    sdt = np.sqrt(drv.dt)
    sigma, theta, r = market.sigma, market.theta, market.r
    for sl, dw in _blocks(n_paths, n_steps, seed, antithetic):
        y = np.full(sl.stop - sl.start, float(y0))
        lx = np.full(sl.stop - sl.start, float(np.log(x0)))
        pos = 0
        if rec[0] == 0:
            Y[sl, 0] = y
            X[sl, 0] = np.exp(lx)
            pos = 1
        for k in range(n_steps):
            t = drv.time(k)
            pi, c = controls(t, y)
            z = sdt * dw[:, k]
            lx = lx + (r + pi * sigma * theta - c
                       - 0.5 * pi ** 2 * sigma ** 2) * drv.dt + pi * sigma * z
            y = y + drv.drift(t, y) * drv.dt - theta * z
            exited[sl] |= (y < drv.y_lo) | (y > drv.y_hi)
            if pos < len(rec) and rec[pos] == k + 1:
                Y[sl, pos] = y
                X[sl, pos] = np.exp(lx)
                pos += 1
    times = drv.time(rec)
    return PathEnsemble(times, Y, X, exited, seed, antithetic)


def estimate_J(market, utility, discount, rho, strategy, pbar, x0, t0=0.0,
               n_steps=200, n_paths=10000, seed=0, antithetic=True,
               controls=None, return_per_path=False):
    """Reward functional J(t0, x0) = E[int h(t0,s) U(c_s X_s) ds
    + h(t0,T) U(X_T)] under the given controls, streamed path by path.

    With return_per_path the per-path accumulators are also returned, so
    two runs with the same seed can be differenced pathwise (common
    random numbers) for a low-variance comparison.
    """
    _check_paths(n_paths, antithetic)
    drv = _Driver(market, rho, t0, n_steps)
    if controls is None:
        controls = lambda t, y: (strategy.pi_at(t, y), strategy.c_at(t, y))
    y0 = pbar.invert(t0, x0)
    acc = np.empty(n_paths)
    exited = np.zeros(n_paths, dtype=bool)
    sdt = np.sqrt(drv.dt)
    sigma, theta, r = market.sigma, market.theta, market.r
    for sl, dw in _blocks(n_paths, n_steps, seed, antithetic):
        m = sl.stop - sl.start
        y = np.full(m, float(y0))
        lx = np.full(m, float(np.log(x0)))
        run = np.zeros(m)
        for k in range(n_steps + 1):
            t = drv.time(k)
            pi, c = controls(t, y)
            w = drv.dt if 0 < k < n_steps else 0.5 * drv.dt
            run += w * discount.h(t0, t) * utility.U(c * np.exp(lx))
            if k == n_steps:
                break
            z = sdt * dw[:, k]
            lx = lx + (r + pi * sigma * theta - c
                       - 0.5 * pi ** 2 * sigma ** 2) * drv.dt + pi * sigma * z
            y = y + drv.drift(t, y) * drv.dt - theta * z
            exited[sl] |= (y < drv.y_lo) | (y > drv.y_hi)
        run += discount.h(t0, market.T) * utility.U(np.exp(lx))
        acc[sl] = run
    value, se = _mean_se(acc, antithetic)
    est = MCEstimate(value, se, n_paths, float(np.mean(exited)))
    return (est, acc) if return_per_path else est


def estimate_F_mc(market, utility, discount, phi, t, y, n_steps=200,
                  n_paths=10000, seed=0, antithetic=True):
    """Pathwise estimate of F[phi](t, y) for cross-validation.

    Uses the stochastic representation of the y-derivative surfaces:
    d/dy delta(t, s, y) = E[U0'(Y_s) exp(int_t^s phi_y(u, Y_u) du)]
    along the phi-drift process, plugged into the ratio of h_t- and
    h-weighted time integrals.  Standard error by the delta method on
    (antithetic-paired) numerator and denominator samples.
    """
    _check_paths(n_paths, antithetic)
    drv = _Driver(market, phi, t, n_steps)
    phi_y_vals = deriv_y(phi.values, phi.grid.dy)
    phi_y = lambda s, yy: bilinear(phi.grid, phi_y_vals, s, yy)
    A = np.empty(n_paths)  # h_t-weighted integral per path
    B = np.empty(n_paths)  # h-weighted integral per path
    exited = np.zeros(n_paths, dtype=bool)
    sdt = np.sqrt(drv.dt)
    theta = market.theta
    T = market.T
    for sl, dw in _blocks(n_paths, n_steps, seed, antithetic):
        m = sl.stop - sl.start
        yy = np.full(m, float(y))
        logw = np.zeros(m)
        a = np.zeros(m)
        b = np.zeros(m)
        for k in range(n_steps + 1):
            s = drv.time(k)
            val = utility.U0p(yy) * np.exp(logw)
            w = drv.dt if 0 < k < n_steps else 0.5 * drv.dt
            a += w * discount.dh_dt(t, s) * val
            b += w * discount.h(t, s) * val
            if k == n_steps:
                break
            logw = logw + phi_y(s, yy) * drv.dt
            yy = yy + drv.drift(s, yy) * drv.dt - theta * sdt * dw[:, k]
            exited[sl] |= (yy < drv.y_lo) | (yy > drv.y_hi)
        val = utility.U0p(yy) * np.exp(logw)
        a += discount.dh_dt(t, T) * val
        b += discount.h(t, T) * val
        A[sl] = a
        B[sl] = b
    if antithetic:
        A = 0.5 * (A[0::2] + A[1::2])
        B = 0.5 * (B[0::2] + B[1::2])
    n = len(A)
    Fhat = A.mean() / B.mean()
    resid = A - Fhat * B
    se = float(np.std(resid, ddof=1) / (np.sqrt(n) * abs(B.mean())))
    return MCEstimate(float(Fhat), se, n_paths, float(np.mean(exited)))


def estimate_pbar_mc(market, utility, rho, t, y, n_steps=200, n_paths=10000,
                     seed=0, antithetic=True):
    """Feynman-Kac style cross-check of pbar(t, y).

    Evaluates E[int_t^T e^{-r(s-t)} I0(Y_s + theta^2 (s-t)) ds
    + e^{-r(T-t)} I0(Y_T + theta^2 (T-t))] along the equilibrium state
    process.  The deterministic shift theta^2 (s-t) converts the state
    drift into the drift of the pbar equation; the conversion is exact
    when rho_bar is flat in y and a controlled approximation otherwise,
    so this estimator is a cross-check, not the primary solver.
    """
    _check_paths(n_paths, antithetic)
    drv = _Driver(market, rho, t, n_steps)
    acc = np.empty(n_paths)
    exited = np.zeros(n_paths, dtype=bool)
    sdt = np.sqrt(drv.dt)
    theta = market.theta
    r = market.r
    for sl, dw in _blocks(n_paths, n_steps, seed, antithetic):
        m = sl.stop - sl.start
        yy = np.full(m, float(y))
        run = np.zeros(m)
        for k in range(n_steps + 1):
            s = drv.time(k)
            w = drv.dt if 0 < k < n_steps else 0.5 * drv.dt
            run += w * np.exp(-r * (s - t)) * utility.I0(
                yy + theta ** 2 * (s - t))
            if k == n_steps:
                break
            yy = yy + drv.drift(s, yy) * drv.dt - theta * sdt * dw[:, k]
            exited[sl] |= (yy < drv.y_lo) | (yy > drv.y_hi)
        run += np.exp(-r * (market.T - t)) * utility.I0(
            yy + theta ** 2 * (market.T - t))
        acc[sl] = run
    value, se = _mean_se(acc, antithetic)
    return MCEstimate(value, se, n_paths, float(np.mean(exited)))
