"""Simulatable price models: ABM, GBM, Langevin (QED) and discrete microstructure.

All models share the Ito form dX = drift(X) dt + diffusion(X) dW except
:class:`Micro`, whose native dynamics is the discrete recursion in
:func:`micro_step`; its ``drift_fn`` is the continuum limit of that recursion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import ClassVar, Union

from .errors import ConfigError, NegativePrice
from .potential import QuarticPotential, drift as potential_drift, from_microstructure


def _check_sigma(sigma):
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ConfigError(f"sigma must be finite and >= 0, got {sigma!r}")


@dataclass(frozen=True)
class ABM:
    """Arithmetic Brownian motion dX = mu dt + sigma dW."""

    mu: float
    sigma: float
    kind: ClassVar[str] = "abm"
    multiplicative: ClassVar[bool] = False

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class GBM:
    """Geometric Brownian motion dX = mu X dt + sigma X dW."""

    mu: float
    sigma: float
    kind: ClassVar[str] = "gbm"
    multiplicative: ClassVar[bool] = True

    def __post_init__(self):
        _check_sigma(self.sigma)

    def as_langevin(self) -> "Langevin":
        return Langevin(QuarticPotential.gbm(self.mu), self.sigma)


@dataclass(frozen=True)
class Langevin:
    """dX = -U'(X) dt + sigma X dW for a quartic potential U (the QED model)."""

    potential: QuarticPotential
    sigma: float
    kind: ClassVar[str] = "langevin"
    multiplicative: ClassVar[bool] = True

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class Micro:
    """Discrete flow/impact dynamics.

    ``lam`` is the flow curvature (lambda) and ``mu_impact`` the linear impact
    coefficient, kept distinct from the GBM drift ``mu``.
    """

    r_f: float
    c: float
    u_bar: float
    phi: float
    lam: float
    mu_impact: float
    sigma: float
    signal_offset: float = 0.0
    kind: ClassVar[str] = "micro"
    multiplicative: ClassVar[bool] = True

    def __post_init__(self):
        _check_sigma(self.sigma)

    def flow(self, x):
        return self.u_bar + self.phi * x + self.lam * x * x

    def mapped_potential(self) -> QuarticPotential:
        return from_microstructure(self.r_f, self.c, self.u_bar, self.phi, self.lam,
                                   self.mu_impact, signal_offset=self.signal_offset)

    def as_langevin(self) -> Langevin:
        return Langevin(self.mapped_potential(), self.sigma)


ModelSpec = Union[ABM, GBM, Langevin, Micro]


def drift_fn(m: ModelSpec, x):
    if isinstance(m, Langevin):
        return potential_drift(m.potential, x)
    if isinstance(m, GBM):
        return m.mu * x
    if isinstance(m, ABM):
        return m.mu + 0.0 * x
    if isinstance(m, Micro):
        # (1 + r dt)(x + (u - c) x dt) expanded to O(dt), with r = r_f + z - mu u
        return x * (m.r_f + m.signal_offset - m.c + (1.0 - m.mu_impact) * m.flow(x))
    raise TypeError(f"unknown model {m!r}")


def diffusion_fn(m: ModelSpec, x):
    if isinstance(m, ABM):
        return m.sigma + 0.0 * x
    if isinstance(m, (GBM, Langevin, Micro)):
        return m.sigma * x
    raise TypeError(f"unknown model {m!r}")


def micro_step_unchecked(m: Micro, x, eps, dt: float, z_offset=None):
    """Vectorised discrete step without the sign check.

    Dividend paid and flow injected first, then the capital grows at the
    impacted rate r = r_f + z - mu_impact u + (sigma / sqrt(dt)) eps.
    """
    z = m.signal_offset if z_offset is None else z_offset
    u = m.flow(x)
    r = m.r_f + z - m.mu_impact * u + (m.sigma / math.sqrt(dt)) * eps
    return (1.0 + r * dt) * (x - m.c * x * dt + u * x * dt)


def micro_step(m: Micro, x: float, z_offset: float, eps: float, dt: float) -> float:
    """One step of the discrete dynamics; raises NegativePrice if it overshoots 0."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if x < 0:
        raise ConfigError("x must be non-negative")
    out = micro_step_unchecked(m, x, eps, dt, z_offset)
    if out < 0:
        raise NegativePrice(f"step from x={x!r} produced {out!r}")
    return float(out)


def model_to_dict(m: ModelSpec) -> dict:
    if isinstance(m, ABM):
        return {"kind": "abm", "mu": m.mu, "sigma": m.sigma}
    if isinstance(m, GBM):
        return {"kind": "gbm", "mu": m.mu, "sigma": m.sigma}
    if isinstance(m, Langevin):
        return {"kind": "langevin", **m.potential.to_dict(), "sigma": m.sigma}
    if isinstance(m, Micro):
        return {"kind": "micro", "r_f": m.r_f, "c": m.c, "u_bar": m.u_bar, "phi": m.phi,
                "lambda": m.lam, "mu_impact": m.mu_impact, "sigma": m.sigma,
                "signal_offset": m.signal_offset}
    raise TypeError(f"unknown model {m!r}")


def with_sigma(m: ModelSpec, sigma: float) -> ModelSpec:
    return replace(m, sigma=sigma)
