"""Default probabilities, first-passage times, instantons and ensemble moments."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, NonIntegrable, ShapeError
from .models import ModelSpec
from .potential import (BARRIER_SHAPES, Kind, QuarticPotential, classify, critical_points,
                        evaluate, nearest_barrier)
from .simulate import PathEnsemble, SimConfig, simulate

Z95 = 1.959963984540054
# log of the largest finite float64, with headroom for the quadrature weights
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class DefaultEstimate:
    probability: float
    stderr: float
    n_absorbed: int
    n_paths: int
    horizon: float
    mean_absorption_time: float | None
    absorption_time_stderr: float | None
    crossing_probability: float | None = None

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.probability - Z95 * self.stderr, self.probability + Z95 * self.stderr)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ci95"] = list(self.ci95)
        return d


def default_probability_mc(m: ModelSpec, cfg: SimConfig, threads: int | None = None,
                           ensemble: PathEnsemble | None = None) -> DefaultEstimate:
    """Fraction of paths absorbed by the horizon with its binomial standard error.

    The mean absorption time is averaged over absorbed paths only.
    """
    if not m.multiplicative:
        raise ConfigError("default probability needs a multiplicative model")
    e = ensemble if ensemble is not None else simulate(m, cfg, threads=threads)
    hit = e.absorbed
    n = e.n_paths
    k = int(hit.sum())
    p = k / n
    se = math.sqrt(p * (1.0 - p) / n)
    mean_t = t_se = None
    if k:
        ts = e.absorbed_at[hit]
        mean_t = float(ts.mean())
        t_se = float(ts.std(ddof=1) / math.sqrt(k)) if k > 1 else None
    cross = None
    if e.crossed_at is not None:
        cross = float(np.mean(~np.isnan(e.crossed_at)))
    return DefaultEstimate(p, se, k, n, e.horizon, mean_t, t_se, cross)


@dataclass(frozen=True)
class EscapeProblem:
    """Downward escape from ``start`` to ``exit`` (exit < start) under dX = -U' dt + sigma X dW."""

    potential: QuarticPotential
    sigma: float
    start: float
    exit: float
    direction: str = "down_through_barrier"

    def __post_init__(self):
        if self.direction != "down_through_barrier":
            raise ConfigError(f"unsupported direction {self.direction!r}")
        if not (self.start > 0 and self.exit > 0):
            raise ConfigError("start and exit must lie in (0, inf)")
        if self.exit > self.start:
            raise ConfigError("exit must lie below start")

    def with_sigma(self, sigma: float) -> "EscapeProblem":
        return replace(self, sigma=sigma)

    @property
    def barrier_height(self) -> float | None:
        """U(top) - U(start) for the highest maximum between exit and start."""
        tops = [c for c in critical_points(self.potential)
                if c.kind is Kind.MAXIMUM and self.exit < c.location < self.start]
        if not tops:
            return None
        top = max(tops, key=lambda c: c.potential_value)
        return float(top.potential_value - evaluate(self.potential, self.start))


def log_scale_density(p: QuarticPotential, sigma: float, x):
    """psi(x) = int 2 U'(u) / (sigma^2 u^2) du, up to an additive constant.

    With U'(u)/u^2 = -theta/u + kappa + g u the integral is closed form. The
    scale density is exp(psi), the speed density 2 exp(-psi) / (sigma^2 x^2).
    """
    return (2.0 / (sigma * sigma)) * (-p.theta * np.log(x) + p.kappa * x + 0.5 * p.g * x * x)


def reflecting_cutoff(ep: EscapeProblem, margin: float = 25.0) -> float:
    """Upper reflecting boundary for the inner MFPT integral.

    The smallest x > start at which U(x) - U(start) >= margin sigma^2 and the
    log speed density has also fallen by ``margin`` below its peak on [start, x].
    """
    p, s = ep.potential, ep.sigma
    u0 = evaluate(p, ep.start)

    def ok(x):
        if evaluate(p, x) - u0 < margin * s * s:
            return False
        xs = np.linspace(ep.start, x, 2001)
        psi = log_scale_density(p, s, xs)
        return psi[-1] - psi.min() >= margin

    x = max(2.0 * ep.start, ep.start + 1.0)
    for _ in range(200):
        if ok(x):
            break
        x *= 1.5
    else:
        raise NonIntegrable("potential does not confine the upper tail; no reflecting cutoff",
                            (ep.start, x))
    lo, hi = ep.start, x
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _inside(points, lo: float, hi: float) -> list[float]:
    pad = 1e-9 * (hi - lo)
    return [q for q in points if lo + pad < q < hi - pad]


def mfpt_quadrature(ep: EscapeProblem, quad_tol: float = 1e-8, cutoff: float | None = None,
                    margin: float = 25.0) -> float:
    """Mean first-passage time from ``start`` down to ``exit``.

    T = int_exit^start dy int_y^R 2 exp(psi(y) - psi(z)) / (sigma^2 z^2) dz with a
    reflecting wall at R, evaluated by nested adaptive quadrature.
    """
    if ep.start == ep.exit:
        return 0.0
    if not ep.sigma > 0:
        raise ConfigError("sigma must be positive for a finite passage time")
    p, s = ep.potential, ep.sigma
    R = reflecting_cutoff(ep, margin) if cutoff is None else float(cutoff)
    if R <= ep.start:
        raise ConfigError("cutoff must lie above start")
    _check_exponent(p, s, ep.exit, R)

    c2 = 2.0 / (s * s)
    th, ka, g = p.theta, p.kappa, p.g

    def psi(x):
        return c2 * (-th * math.log(x) + ka * x + 0.5 * g * x * x)

    inner_tol = max(quad_tol * 1e-2, 1e-13)
    cps = [c.location for c in critical_points(p)]

    def inner(y):
        py = psi(y)
        f = lambda z: c2 / (z * z) * math.exp(py - psi(z))
        pts = _inside(cps, y, R) or None
        val, _ = integrate.quad(f, y, R, epsrel=inner_tol, epsabs=0.0, limit=200, points=pts)
        return val

    outer_pts = _inside(cps, ep.exit, ep.start) or None
    total, _ = integrate.quad(inner, ep.exit, ep.start, epsrel=quad_tol, epsabs=0.0,
                              limit=200, points=outer_pts)
    if not math.isfinite(total):
        raise NonIntegrable("MFPT integral is not finite", (ep.exit, R))
    return float(total)


def _check_exponent(p, s, lo, hi):
    xs = np.linspace(lo, hi, 4001)
    psi = log_scale_density(p, s, xs)
    run_max = np.maximum.accumulate(psi)
    gap = run_max - psi
    k = int(np.argmax(gap))
    if gap[k] > MAX_EXPONENT:
        j = int(np.argmax(psi[:k + 1]))
        raise NonIntegrable(f"scale density overflows (exponent {gap[k]:.1f})",
                            (float(xs[j]), float(xs[k])))


@dataclass(frozen=True)
class ScalingFit:
    action: float
    r2: float
    slope: float
    intercept: float
    sigmas: tuple
    mfpts: tuple

    def to_dict(self) -> dict:
        return {"action": self.action, "r2": self.r2, "slope": self.slope,
                "intercept": self.intercept, "sigmas": list(self.sigmas),
                "mfpts": list(self.mfpts)}


def _require_barrier(ep: EscapeProblem):
    rep = classify(ep.potential)
    if rep.shape_label not in BARRIER_SHAPES:
        raise ShapeError(f"{rep.shape_label.value} potential has no barrier to escape over")
    if not any(ep.exit < c.location < ep.start for c in rep.maxima):
        raise ShapeError("no barrier between exit and start")
    return rep


def escape_scaling_fit(ep: EscapeProblem, sigma_grid: Sequence[float],
                       quad_tol: float = 1e-8) -> ScalingFit:
    """Least-squares fit of log(1/MFPT) against 1/sigma^2.

    The magnitude of the slope estimates the action A in MFPT ~ exp(A / sigma^2).
    """
    sig = np.asarray(sorted(sigma_grid), dtype=float)
    if sig.size < 4:
        raise ConfigError("need at least 4 sigma values")
    if np.any(sig <= 0):
        raise ConfigError("sigma values must be positive")
    _require_barrier(ep)
    T = np.array([mfpt_quadrature(ep.with_sigma(s), quad_tol) for s in sig])
    xv = 1.0 / sig**2
    yv = -np.log(T)
    slope, intercept = np.polyfit(xv, yv, 1)
    resid = yv - (slope * xv + intercept)
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return ScalingFit(abs(float(slope)), r2, float(slope), float(intercept),
                      tuple(sig.tolist()), tuple(T.tolist()))


@dataclass(frozen=True)
class InstantonPath:
    times: np.ndarray
    values: np.ndarray
    kind: str
    well: float
    barrier: float
    reached_barrier: bool = True

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,x\n")
            for t, x in zip(self.times, self.values):
                fh.write(f"{float(t)!r},{float(x)!r}\n")


INSTANTON_KINDS = ("instanton", "anti_instanton", "bounce")


def instanton_trajectory(p: QuarticPotential, kind: str = "instanton",
                         t_span: tuple[float, float] = (0.0, 500.0), ode_tol: float = 1e-8,
                         well: float | None = None) -> InstantonPath:
    """Zero-noise barrier-hopping trajectory from a well to the adjacent barrier top.

    The instanton solves the reversed gradient flow dx/dt = +U'(x) from
    ``well + eps`` with eps = 1e-6 * |barrier - well| (the well itself is a
    fixed point), and stops once |U'(x)| < ``ode_tol`` past the midpoint. The
    default well is the right-most minimum, the operating state of the firm.
    The anti-instanton is the time reverse; the bounce is instanton followed by
    anti-instanton, sharing the barrier-top sample.
    """
    if kind not in INSTANTON_KINDS:
        raise ConfigError(f"kind must be one of {INSTANTON_KINDS}")
    if not ode_tol > 0:
        raise ConfigError("ode_tol must be positive")
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ConfigError("t_span must be finite and increasing")
    rep = classify(p)
    if rep.shape_label not in BARRIER_SHAPES:
        raise ShapeError(f"{rep.shape_label.value} potential has no barrier")
    if well is None:
        well = max(c.location for c in rep.minima)
    top = nearest_barrier(p, well)
    w = min((c for c in rep.minima), key=lambda c: abs(c.location - well)).location
    sep = top.location - w
    x_start = w + 1e-6 * sep

    def rhs(t, x):
        return -(p.theta * x - p.kappa * x * x - p.g * x * x * x)

    def arrived(t, x):
        if abs(x[0] - w) < 0.5 * abs(sep):
            return 1.0
        return abs(float(rhs(t, x)[0])) - ode_tol

    arrived.terminal = True
    arrived.direction = -1
    sol = integrate.solve_ivp(rhs, (t0, t1), [x_start], method="DOP853", events=arrived,
                              rtol=1e-11, atol=1e-14 * max(1.0, abs(top.location)),
                              dense_output=False)
    times = sol.t.copy()
    vals = sol.y[0].copy()
    reached = sol.status == 1
    if kind == "instanton":
        return InstantonPath(times, vals, kind, w, top.location, reached)
    t_end = times[-1]
    if kind == "anti_instanton":
        return InstantonPath(t0 + (t_end - times[::-1]), vals[::-1].copy(), kind, w,
                             top.location, reached)
    b_times = np.concatenate([times, 2.0 * t_end - times[-2::-1]])
    b_vals = np.concatenate([vals, vals[-2::-1]])
    return InstantonPath(b_times, b_vals, kind, w, top.location, reached)


@dataclass(frozen=True)
class MomentReport:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    growth_rate: float
    growth_intercept: float
    r2: float
    rate_stderr: float

    def to_dict(self) -> dict:
        return {"growth_rate": self.growth_rate, "growth_intercept": self.growth_intercept,
                "r2": self.r2, "rate_stderr": self.rate_stderr,
                "terminal_mean": float(self.mean[-1]),
                "terminal_variance": float(self.variance[-1])}


def moment_report(e: PathEnsemble) -> MomentReport:
    """Cross-sectional mean and variance per time, plus an exponential fit of the mean.

    The fit regresses log(mean) on t by least squares. ``rate_stderr`` is the
    Monte Carlo error of the rate implied by the terminal mean alone,
    sqrt(var_T / n) / (mean_T * T).
    """
    if e.n_paths == 0 or e.times.size == 0:
        raise ConfigError("empty ensemble")
    mean = e.values.mean(axis=0)
    var = e.values.var(axis=0, ddof=1) if e.n_paths > 1 else np.zeros_like(mean)
    t = e.times
    rate = intercept = r2 = float("nan")
    pos = mean > 0
    if pos.sum() >= 2 and np.ptp(t[pos]) > 0:
        y = np.log(mean[pos])
        rate, intercept = np.polyfit(t[pos], y, 1)
        resid = y - (rate * t[pos] + intercept)
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    T = t[-1]
    se = float("nan")
    if mean[-1] > 0 and T > 0:
        se = math.sqrt(var[-1] / e.n_paths) / (mean[-1] * T)
    return MomentReport(t, mean, var, float(rate), float(intercept), float(r2), se)
