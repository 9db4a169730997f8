"""Quartic potential U(x) = -(theta/2) x^2 + (kappa/3) x^3 + (g/4) x^4.

Prices are treated as dimensionless quantities of order one. The drift of the
associated Langevin dynamics is ``-U'(x) = theta x - kappa x^2 - g x^3``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DEFAULT_TOL = 1e-9


class Kind(str, Enum):
    MINIMUM = "minimum"
    MAXIMUM = "maximum"
    INFLECTION = "inflection"


class Shape(str, Enum):
    INVERTED_PARABOLA = "INVERTED_PARABOLA"
    SINGLE_WELL = "SINGLE_WELL"
    METASTABLE = "METASTABLE"
    METASTABLE_AT_ZERO = "METASTABLE_AT_ZERO"
    DOUBLE_WELL = "DOUBLE_WELL"
    DEGENERATE = "DEGENERATE"


BARRIER_SHAPES = frozenset({Shape.METASTABLE, Shape.METASTABLE_AT_ZERO, Shape.DOUBLE_WELL})


@dataclass(frozen=True)
class QuarticPotential:
    """Potential parameters.

    ``theta`` absorbs any constant signal offset (w^T z) so the potential is
    time independent.
    """

    theta: float
    kappa: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        for name in ("theta", "kappa", "g"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")

    @classmethod
    def gbm(cls, mu: float) -> "QuarticPotential":
        """Inverted parabola -(mu/2) x^2 equivalent to GBM drift mu."""
        return cls(theta=mu, kappa=0.0, g=0.0)

    @property
    def scale(self) -> float:
        return max(abs(self.theta), abs(self.kappa), abs(self.g))

    def __call__(self, x):
        return evaluate(self, x)

    def gradient(self, x):
        """U'(x)."""
        return -drift(self, x)

    def curvature(self, x):
        """U''(x)."""
        return -self.theta + 2.0 * self.kappa * x + 3.0 * self.g * x * x

    def scaled(self, factor: float) -> "QuarticPotential":
        return QuarticPotential(self.theta * factor, self.kappa * factor, self.g * factor)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "kappa": self.kappa, "g": self.g}


@dataclass(frozen=True)
class CriticalPoint:
    location: float
    kind: Kind
    potential_value: float

    def to_dict(self) -> dict:
        return {"location": self.location, "kind": self.kind.value,
                "potential_value": self.potential_value}


@dataclass(frozen=True)
class ShapeReport:
    critical_points: tuple
    shape_label: Shape
    barrier_height: float | None = None
    barrier_location: float | None = None
    metastable_location: float | None = None

    @property
    def minima(self) -> list[CriticalPoint]:
        return [c for c in self.critical_points if c.kind is Kind.MINIMUM]

    @property
    def maxima(self) -> list[CriticalPoint]:
        return [c for c in self.critical_points if c.kind is Kind.MAXIMUM]

    @property
    def nonnegative_points(self) -> list[CriticalPoint]:
        """Critical points on the simulated half-line x >= 0."""
        return [c for c in self.critical_points if c.location >= 0.0]

    def to_dict(self) -> dict:
        return {
            "shape_label": self.shape_label.value,
            "barrier_height": self.barrier_height,
            "barrier_location": self.barrier_location,
            "metastable_location": self.metastable_location,
            "critical_points": [c.to_dict() for c in self.critical_points],
            "nonnegative_locations": [c.location for c in self.nonnegative_points],
        }


def evaluate(p: QuarticPotential, x):
    """U(x), scalar or array."""
    x2 = x * x
    return -0.5 * p.theta * x2 + (p.kappa / 3.0) * x2 * x + 0.25 * p.g * x2 * x2


def drift(p: QuarticPotential, x):
    """-U'(x) = theta x - kappa x^2 - g x^3, scalar or array."""
    return p.theta * x - p.kappa * x * x - p.g * x * x * x


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + b x + c with the cancellation-free branch."""
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        # tiny negative discriminants from rounding are a double root
        if disc > -1e-14 * max(b * b, abs(4.0 * a * c), 1e-300):
            disc = 0.0
        else:
            return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    if q == 0.0:
        return [0.0, 0.0]
    return sorted([q / a, c / q])


def critical_points(p: QuarticPotential, tol: float = DEFAULT_TOL) -> list[CriticalPoint]:
    """All real critical points of U, ascending.

    U'(x) = x (g x^2 + kappa x - theta). Roots closer than ``tol`` (relative to
    max(1, |x|)) are merged. A merged cluster of even multiplicity is an
    inflection; odd multiplicity is an extremum classified by the sign change of
    U'. Simple roots are labelled by the sign of U'' with ``tol`` as the
    inflection threshold.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    scale = p.scale
    # normalize so the discriminant neither underflows nor overflows
    s = scale if scale > 0 else 1.0
    roots = sorted([0.0] + _quadratic_roots(p.g / s, p.kappa / s, -p.theta / s))

    clusters: list[list[float]] = []
    for r in roots:
        if clusters and abs(r - clusters[-1][-1]) <= tol * max(1.0, abs(r)):
            clusters[-1].append(r)
        else:
            clusters.append([r])

    out = []
    for cl in clusters:
        # 0 is an exact root; prefer it as the representative when merged
        x = 0.0 if 0.0 in cl else float(sum(cl) / len(cl))
        mult = len(cl)
        if scale == 0.0:
            kind = Kind.INFLECTION
        elif mult == 1:
            u2 = p.curvature(x)
            if abs(u2) <= tol * scale * (1.0 + x * x):
                kind = Kind.INFLECTION
            else:
                kind = Kind.MINIMUM if u2 > 0 else Kind.MAXIMUM
        elif mult % 2 == 0:
            kind = Kind.INFLECTION
        else:
            kind = _sign_change_kind(p, x, cl)
        out.append(CriticalPoint(x, kind, float(evaluate(p, x))))
    return out


def _sign_change_kind(p: QuarticPotential, x: float, cluster: list[float]) -> Kind:
    h = max(1e-3, 10.0 * (max(cluster) - min(cluster)))
    left, right = p.gradient(x - h), p.gradient(x + h)
    if left < 0 < right:
        return Kind.MINIMUM
    if left > 0 > right:
        return Kind.MAXIMUM
    return Kind.INFLECTION


def _tail_unbounded_below(p: QuarticPotential) -> tuple[bool, bool]:
    """(left tail -> -inf, right tail -> -inf)."""
    if p.g != 0.0:
        return (p.g < 0, p.g < 0)
    if p.kappa != 0.0:
        # U ~ (kappa/3) x^3
        return (p.kappa > 0, p.kappa < 0)
    if p.theta != 0.0:
        return (p.theta > 0, p.theta > 0)
    return (False, False)


def classify(p: QuarticPotential, tol: float = DEFAULT_TOL) -> ShapeReport:
    """Shape taxonomy of U over the whole real line.

    METASTABLE_AT_ZERO is reserved for a sole minimum at x = 0 guarded by a
    barrier beyond which U is unbounded below. Two finite minima are either a
    DOUBLE_WELL (equal depth within ``tol``) or METASTABLE, where the higher
    minimum is the metastable one.
    """
    cps = tuple(critical_points(p, tol))
    minima = [c for c in cps if c.kind is Kind.MINIMUM]
    maxima = [c for c in cps if c.kind is Kind.MAXIMUM]

    if p.kappa == 0.0 and p.g == 0.0 and p.theta > 0.0:
        return ShapeReport(cps, Shape.INVERTED_PARABOLA)

    left_down, right_down = _tail_unbounded_below(p)
    if p.theta == 0.0 and p.kappa == 0.0 and p.g == 0.0:
        return ShapeReport(cps, Shape.DEGENERATE)

    if not left_down and not right_down:
        if len(minima) == 1:
            return ShapeReport(cps, Shape.SINGLE_WELL)
        if len(minima) == 2:
            lo, hi = minima
            between = [m for m in maxima if lo.location < m.location < hi.location]
            if between:
                top = max(between, key=lambda c: c.potential_value)
                dU = abs(lo.potential_value - hi.potential_value)
                deep = max(1.0, abs(lo.potential_value), abs(hi.potential_value))
                meta = max((lo, hi), key=lambda c: c.potential_value)
                height = max(0.0, top.potential_value - meta.potential_value)
                label = Shape.DOUBLE_WELL if dU < tol * deep else Shape.METASTABLE
                return ShapeReport(cps, label, height, top.location, meta.location)
        return ShapeReport(cps, Shape.DEGENERATE)

    if len(minima) == 1 and minima[0].location == 0.0 and maxima:
        well = minima[0]
        guards = _adjacent_maxima(cps, well)
        if guards:
            top = min(guards, key=lambda c: c.potential_value)
            height = max(0.0, top.potential_value - well.potential_value)
            return ShapeReport(cps, Shape.METASTABLE_AT_ZERO, height, top.location, 0.0)
    return ShapeReport(cps, Shape.DEGENERATE)


def _adjacent_maxima(cps, well: CriticalPoint) -> list[CriticalPoint]:
    extrema = [c for c in cps if c.kind is not Kind.INFLECTION]
    i = extrema.index(well)
    out = []
    for j in (i - 1, i + 1):
        if 0 <= j < len(extrema) and extrema[j].kind is Kind.MAXIMUM:
            out.append(extrema[j])
    return out


def nearest_barrier(p: QuarticPotential, well: float, tol: float = DEFAULT_TOL) -> CriticalPoint:
    """The maximum adjacent to the minimum at ``well`` on the side of x = 0.

    Falls back to the other side when nothing lies between ``well`` and 0.
    """
    from .errors import ShapeError

    cps = critical_points(p, tol)
    mins = [c for c in cps if c.kind is Kind.MINIMUM]
    if not mins:
        raise ShapeError("potential has no minimum")
    w = min(mins, key=lambda c: abs(c.location - well))
    adj = _adjacent_maxima(cps, w)
    if not adj:
        raise ShapeError(f"no barrier next to the minimum at {w.location:g}")
    toward_zero = [m for m in adj if abs(m.location) < abs(w.location)]
    return (toward_zero or adj)[0]


def from_microstructure(r_f: float, c: float, u_bar: float, phi: float, lam: float,
                        mu_impact: float, signal_offset: float = 0.0,
                        impacted_base_flow: bool = True) -> QuarticPotential:
    """Map flow/impact parameters to the reduced potential.

    kappa = (mu_impact - 1) phi and g = (mu_impact - 1) lam. The constant flow
    ``u_bar`` is impacted like the rest of the flow, giving
    theta = r_f - c + signal_offset + (1 - mu_impact) u_bar; this is the
    continuum limit of the discrete step. ``impacted_base_flow=False`` returns
    the bare form theta = r_f - c + signal_offset + u_bar instead.
    """
    factor = mu_impact - 1.0
    base = (1.0 - mu_impact) * u_bar if impacted_base_flow else u_bar
    return QuarticPotential(theta=r_f - c + signal_offset + base,
                            kappa=factor * phi, g=factor * lam)


def log_price_potential(mu: float, sigma: float) -> float:
    """Slope of the log-price potential V(y) = -(mu - sigma^2/2) y.

    Negative slope pushes y away from -inf (ruin); positive slope attracts it.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return -(mu - 0.5 * sigma * sigma)


def grid(p: QuarticPotential, lo: float, hi: float, n: int = 801):
    x = np.linspace(lo, hi, n)
    return x, evaluate(p, x)
