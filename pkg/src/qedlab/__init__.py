"""Quartic-potential (QED) market model with GBM/ABM baselines.

Potential analysis, seeded Monte Carlo with an absorbing default state,
escape-time and instanton estimates, and Euler quasi-likelihood calibration.
"""
from .errors import (ConfigError, DegenerateObservation, EmptySample, NegativePrice,
                     NonConvergenceWarning, NonIntegrable, QedLabError, ShapeError)
from .potential import (CriticalPoint, Kind, QuarticPotential, Shape, ShapeReport, classify,
                        critical_points, drift, evaluate, from_microstructure,
                        log_price_potential, nearest_barrier)
from .models import ABM, GBM, Langevin, Micro, drift_fn, diffusion_fn, micro_step
from .simulate import (Histogram, PathEnsemble, SimConfig, quasi_stationary_histogram,
                       simulate)
from .analysis import (DefaultEstimate, EscapeProblem, InstantonPath, MomentReport,
                       ScalingFit, default_probability_mc, escape_scaling_fit,
                       instanton_trajectory, mfpt_quadrature, moment_report)
from .calibrate import CalibrationResult, Params, fit, flow_rate_estimate, loglik

__version__ = "0.1.0"
