"""Quasi-maximum-likelihood calibration of (theta, kappa, g, sigma) and flow-rate estimates."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, DegenerateObservation, NonConvergenceWarning

PARAM_NAMES = ("theta", "kappa", "g", "sigma")
DEFAULT_BOUNDS = ((-50.0, 50.0), (-50.0, 50.0), (0.0, 50.0), (1e-8, 50.0))
LOG_2PI = math.log(2.0 * math.pi)


class Params(NamedTuple):
    theta: float
    kappa: float
    g: float
    sigma: float


@dataclass(frozen=True)
class CalibrationResult:
    params: Params
    loglik: float
    converged: bool
    iterations: int
    stderr_estimates: Params | None = None
    n_obs: int = 0
    start_index: int = 0

    def to_dict(self) -> dict:
        out = {
            "params": self.params._asdict(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_obs": self.n_obs,
            "start_index": self.start_index,
        }
        out["stderr_estimates"] = (self.stderr_estimates._asdict()
                                   if self.stderr_estimates is not None else None)
        return out


def truncate_absorbed(path) -> np.ndarray:
    """Observations before the first non-positive value (the pre-absorption segment)."""
    x = np.asarray(path, dtype=float)
    bad = np.flatnonzero(x <= 0)
    return x if bad.size == 0 else x[:bad[0]]


def _transitions(path):
    x = np.asarray(path, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ConfigError("path must be a 1-D sequence with at least two observations")
    if not np.all(np.isfinite(x)):
        raise ConfigError("path contains non-finite values")
    prev = x[:-1]
    if np.any(prev <= 0):
        raise DegenerateObservation(
            "path conditions on non-positive prices; truncate the absorbed tail first")
    return prev, x[1:]


def loglik(params: Sequence[float], path, dt: float) -> float:
    """Sum of Euler log transition densities.

    X_{t+dt} | X_t = x ~ N(x + (theta x - kappa x^2 - g x^3) dt, sigma^2 x^2 dt).
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    theta, kappa, g, sigma = params
    prev, nxt = _transitions(path)
    return _loglik(theta, kappa, g, sigma, prev, nxt, dt)


def _loglik(theta, kappa, g, sigma, prev, nxt, dt):
    if not sigma > 0:
        return -math.inf
    mean = prev + (theta * prev - kappa * prev**2 - g * prev**3) * dt
    var = sigma * sigma * prev * prev * dt
    resid = nxt - mean
    return float(-0.5 * np.sum(LOG_2PI + np.log(var) + resid * resid / var))


class _SufficientStats:
    """Euler log-likelihood in O(1) per evaluation.

    With returns r = (x' - x) / x and drift per unit price
    b(x)/x = theta - kappa x - g x^2 = beta . (1, -x, -x^2), each term is
    -(1/2)[log(2 pi sigma^2 dt) + 2 log x + (r - beta.f dt)^2 / (sigma^2 dt)],
    a quadratic in beta whose coefficients are path sums.
    """

    def __init__(self, prev, nxt, dt):
        r = (nxt - prev) / prev
        F = np.column_stack([np.ones_like(prev), -prev, -prev**2])
        self.n = prev.size
        self.dt = dt
        self.sum_log_x = float(np.sum(np.log(prev)))
        self.rr = float(r @ r)
        self.Fr = F.T @ r
        self.FF = F.T @ F

    def loglik(self, theta, kappa, g, sigma):
        if not sigma > 0:
            return -math.inf
        beta = np.array([theta, kappa, g])
        dt = self.dt
        sse = self.rr - 2.0 * dt * float(beta @ self.Fr) + dt * dt * float(beta @ self.FF @ beta)
        s2dt = sigma * sigma * dt
        return (-0.5 * self.n * (LOG_2PI + math.log(s2dt)) - self.sum_log_x
                - 0.5 * sse / s2dt)


def fisher_stderr(params: Params, path, dt: float) -> Params:
    """Standard errors from the Euler-likelihood Fisher information.

    Drift block: sum over transitions of (1, -x, -x^2) outer products times
    dt / sigma^2; sigma block: 2 n / sigma^2.
    """
    prev, _ = _transitions(path)
    F = np.column_stack([np.ones_like(prev), -prev, -prev**2])
    info = F.T @ F * (dt / params.sigma**2)
    try:
        cov = np.linalg.inv(info)
        drift_se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        drift_se = np.full(3, np.inf)
    sig_se = params.sigma / math.sqrt(2.0 * prev.size)
    return Params(*(float(v) for v in drift_se), float(sig_se))


def realized_sigma(path, dt: float) -> float:
    prev, nxt = _transitions(path)
    return float(math.sqrt(np.mean(((nxt - prev) / prev) ** 2) / dt))


def default_starts(path, dt: float) -> list[Params]:
    """Deterministic multi-start set around the realized volatility."""
    s0 = max(realized_sigma(path, dt), 1e-6)
    return [Params(0.0, 0.0, 0.0, s0), Params(0.5, 0.5, 0.5, s0),
            Params(-0.5, -0.5, 0.5, s0), Params(1.0, 1.0, 1.0, s0)]


def _check_bounds(bounds):
    if bounds is None:
        bounds = DEFAULT_BOUNDS
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if len(bounds) != 4:
        raise ConfigError("bounds must give (lo, hi) for theta, kappa, g, sigma")
    for name, (lo, hi) in zip(PARAM_NAMES, bounds):
        if not lo <= hi:
            raise ConfigError(f"empty bound for {name}: [{lo}, {hi}]")
    if bounds[3][0] <= 0:
        raise ConfigError("sigma lower bound must be > 0")
    if bounds[2][0] < 0:
        raise ConfigError("g lower bound must be >= 0")
    return bounds


def fit(path, dt: float, init_params: Sequence[Sequence[float]] | None = None, bounds=None,
        opt_tol: float = 1e-6, max_iter: int = 20000, threads: int = 1) -> CalibrationResult:
    """Maximize the Euler quasi-likelihood by bounded multi-start Nelder-Mead.

    Each start runs until the simplex log-likelihood spread falls below
    ``opt_tol``; the best start wins, ties going to the lowest index. A start
    that hits ``max_iter`` flags the result as not converged and warns.
    """
    bounds = _check_bounds(bounds)
    if not dt > 0:
        raise ConfigError("dt must be positive")
    prev, nxt = _transitions(path)
    starts = [Params(*map(float, p)) for p in (init_params or default_starts(path, dt))]
    if not starts:
        raise ConfigError("at least one start is required")
    for st in starts:
        if len(st) != 4 or any(not lo <= v <= hi for v, (lo, hi) in zip(st, bounds)):
            raise ConfigError(f"start {tuple(st)} outside bounds")

    stats = _SufficientStats(prev, nxt, dt)

    def negll(v):
        val = stats.loglik(v[0], v[1], v[2], v[3])
        return -val if math.isfinite(val) else 1e300

    def run(st):
        # scale the initial simplex to the parameter magnitudes
        base = np.asarray(st, dtype=float)
        step = np.where(np.abs(base) > 1e-3, 0.1 * np.abs(base), 0.05)
        simplex = [base] + [base + step[i] * np.eye(4)[i] for i in range(4)]
        simplex = np.array([np.clip(s, [b[0] for b in bounds], [b[1] for b in bounds])
                            for s in simplex])
        return minimize(negll, base, method="Nelder-Mead", bounds=bounds,
                        options={"fatol": opt_tol, "xatol": 1e-10, "maxiter": max_iter,
                                 "maxfev": 4 * max_iter, "initial_simplex": simplex})

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(st) for st in starts]

    best_i = min(range(len(results)), key=lambda i: (results[i].fun, i))
    best = results[best_i]
    converged = bool(best.success)
    if not converged:
        warnings.warn(f"Nelder-Mead stopped without converging: {best.message}",
                      NonConvergenceWarning, stacklevel=2)
    params = Params(*(float(v) for v in best.x))
    se = fisher_stderr(params, path, dt) if params.sigma > 0 else None
    return CalibrationResult(params, float(-best.fun), converged, int(best.nit), se,
                             n_obs=int(prev.size), start_index=best_i)


def wls_estimate(path, dt: float) -> Params:
    """Closed-form unconstrained Euler MLE (weighted least squares on returns).

    Independent of :func:`fit`; used to cross-check the optimizer.
    """
    prev, nxt = _transitions(path)
    F = np.column_stack([np.ones_like(prev), -prev, -prev**2])
    y = (nxt - prev) / (prev * dt)
    beta, *_ = np.linalg.lstsq(F, y, rcond=None)
    resid = (nxt - prev - (F @ beta) * prev * dt) / prev
    sigma = math.sqrt(np.mean(resid**2) / dt)
    return Params(float(beta[0]), float(beta[1]), float(beta[2]), sigma)


def flow_rate_estimate(annual_inflow: float, market_cap: float, equity_fraction: float) -> float:
    """Constant inflow rate u_bar as a fraction of market capitalization per year."""
    if not market_cap > 0:
        raise ConfigError("market_cap must be positive")
    if not 0.0 <= equity_fraction <= 1.0:
        raise ConfigError("equity_fraction must lie in [0, 1]")
    return equity_fraction * annual_inflow / market_cap
