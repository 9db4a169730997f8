import math

import numpy as np
import pytest

from oracles import mfpt_trapezoid
from qedlab import (GBM, ABM, ConfigError, EscapeProblem, Langevin, NonIntegrable,
                    QuarticPotential, ShapeError, SimConfig, classify, default_probability_mc,
                    escape_scaling_fit, instanton_trajectory, mfpt_quadrature, moment_report,
                    simulate)
from qedlab.analysis import reflecting_cutoff
from qedlab.potential import evaluate

QED = QuarticPotential(-6.0, -5.0, 1.0)  # barrier top at 2, metastable well at 3

# (theta, kappa, g, sigma, start, exit, cutoff, T) with T from the dense trapezoid oracle
MFPT_CASES = [
    (-6.0, -5.0, 1.0, 0.456, 3.0, 0.2, 5.969970717954824, 4.1316251416672705),
    (-6.0, -5.0, 1.0, 0.35, 3.0, 0.2, 5.349384447128237, 6.878859380910173),
    (-24.0, -20.0, 4.0, 0.577, 3.0, 0.2, None, 2.8680775752826047),
    (-7.5, -8.0, 2.0, 0.408, 2.5, 0.15, None, 10.00842661465219),
    (-18.0, -28.0, 10.0, 0.547, 1.8, 0.1, None, 24.45044953974386),
]


@pytest.mark.parametrize("case", MFPT_CASES)
def test_mfpt_matches_frozen_trapezoid_oracle(case):
    th, ka, g, s, start, exit_, cutoff, want = case
    ep = EscapeProblem(QuarticPotential(th, ka, g), s, start, exit_)
    if cutoff is not None:
        assert reflecting_cutoff(ep) == pytest.approx(cutoff, rel=1e-9)
    assert mfpt_quadrature(ep) == pytest.approx(want, rel=1e-6)


def test_trapezoid_oracle_reproduces_frozen_value():
    th, ka, g, s, start, exit_, cutoff, want = MFPT_CASES[0]
    assert mfpt_trapezoid(th, ka, g, s, start, exit_, cutoff) == pytest.approx(want, rel=1e-12)


def test_mfpt_cutoff_sensitivity_below_one_percent():
    for s in (0.35, 0.456, 0.6):
        ep = EscapeProblem(QED, s, 3.0, 0.2)
        a, b = mfpt_quadrature(ep, margin=25), mfpt_quadrature(ep, margin=35)
        assert abs(a / b - 1) <= 0.01


def test_mfpt_monotone_decreasing_in_sigma():
    ts = [mfpt_quadrature(EscapeProblem(QED, s, 3.0, 0.2)) for s in np.linspace(0.3, 0.9, 7)]
    assert all(b < a for a, b in zip(ts, ts[1:]))


def test_mfpt_degenerate_interval_and_validation():
    assert mfpt_quadrature(EscapeProblem(QED, 0.4, 1.0, 1.0)) == 0.0
    with pytest.raises(ConfigError):
        EscapeProblem(QED, 0.4, 1.0, 2.0)
    with pytest.raises(ConfigError):
        EscapeProblem(QED, 0.4, 1.0, 0.0)
    with pytest.raises(ConfigError):
        mfpt_quadrature(EscapeProblem(QED, 0.0, 3.0, 0.2))


def test_mfpt_overflow_reported_as_non_integrable():
    with pytest.raises(NonIntegrable) as info:
        mfpt_quadrature(EscapeProblem(QED, 0.01, 3.0, 0.2))
    assert info.value.interval is not None


def test_mfpt_unconfined_tail_non_integrable():
    with pytest.raises(NonIntegrable):
        mfpt_quadrature(EscapeProblem(QuarticPotential(0.5), 0.2, 1.0, 0.5))


def test_escape_problem_barrier_height():
    ep = EscapeProblem(QED, 0.4, 3.0, 0.2)
    assert ep.barrier_height == pytest.approx(evaluate(QED, 2.0) - evaluate(QED, 3.0))
    assert EscapeProblem(QED, 0.4, 1.5, 0.2).barrier_height is None


def test_scaling_fit_linear_in_inverse_variance():
    ep = EscapeProblem(QED, 1.0, 3.0, 0.2)
    fit = escape_scaling_fit(ep, [0.25, 0.3, 0.35, 0.4, 0.45, 0.5])
    assert fit.r2 >= 0.95 and fit.action > 0 and fit.slope < 0
    assert len(fit.mfpts) == 6 and fit.to_dict()["r2"] == fit.r2


def test_scaling_fit_action_grows_with_barrier():
    grid = [0.35, 0.4, 0.45, 0.5, 0.55, 0.6]
    a1 = escape_scaling_fit(EscapeProblem(QED, 1.0, 3.0, 0.2), grid).action
    a2 = escape_scaling_fit(EscapeProblem(QED.scaled(2.0), 1.0, 3.0, 0.2), grid).action
    assert a2 > a1


def test_scaling_fit_preconditions():
    with pytest.raises(ShapeError):
        escape_scaling_fit(EscapeProblem(QuarticPotential(0.05), 1.0, 1.0, 0.5),
                           [0.2, 0.3, 0.4, 0.5])
    with pytest.raises(ShapeError):  # barrier is not between exit and start
        escape_scaling_fit(EscapeProblem(QED, 1.0, 1.5, 0.2), [0.2, 0.3, 0.4, 0.5])
    with pytest.raises(ConfigError):
        escape_scaling_fit(EscapeProblem(QED, 1.0, 3.0, 0.2), [0.3, 0.4, 0.5])


def test_instanton_endpoints_and_shapes():
    tol = 1e-8
    inst = instanton_trajectory(QED, "instanton", ode_tol=tol)
    assert inst.well == pytest.approx(3.0) and inst.barrier == pytest.approx(2.0)
    assert inst.reached_barrier
    assert inst.values[0] == pytest.approx(3.0 - 1e-6, abs=1e-12)
    curv = abs(QED.curvature(2.0))
    assert abs(inst.values[-1] - 2.0) <= 10 * tol / curv
    assert np.all(np.diff(inst.values) < 0)
    anti = instanton_trajectory(QED, "anti_instanton", ode_tol=tol)
    assert np.array_equal(anti.values, inst.values[::-1])
    assert anti.times[0] == inst.times[0] and np.all(np.diff(anti.times) > 0)
    bounce = instanton_trajectory(QED, "bounce", ode_tol=tol)
    assert np.array_equal(bounce.values, bounce.values[::-1])
    mid = len(bounce.values) // 2
    assert bounce.values[mid] == inst.values[-1]


def test_instanton_explicit_well_and_errors(tmp_path):
    dw = QuarticPotential(1.0, 0.0, 1.0)
    left = instanton_trajectory(dw, well=-1.0)
    assert left.well == pytest.approx(-1.0) and left.barrier == 0.0
    assert np.all(np.diff(left.values) > 0)
    left.to_csv(tmp_path / "i.csv")
    assert (tmp_path / "i.csv").read_text().startswith("t,x\n")
    with pytest.raises(ShapeError):
        instanton_trajectory(QuarticPotential(0.05))
    with pytest.raises(ConfigError):
        instanton_trajectory(QED, "sideways")
    with pytest.raises(ConfigError):
        instanton_trajectory(QED, t_span=(0.0, float("inf")))


def test_instanton_not_reached_flagged():
    inst = instanton_trajectory(QED, t_span=(0.0, 0.5))
    assert not inst.reached_barrier


def test_moment_report_gbm_rate():
    mu = 0.05
    e = simulate(GBM(mu, 0.2), SimConfig(dt=1e-3, horizon=2.0, n_paths=20_000, master_seed=31,
                                         record_every=50))
    rep = moment_report(e)
    assert abs(rep.growth_rate - mu) <= 3 * rep.rate_stderr
    assert rep.r2 > 0.9
    assert rep.variance[0] == 0.0


def test_moment_report_metastable_plateau():
    e = simulate(Langevin(QED, 0.1), SimConfig(dt=1e-3, horizon=10.0, n_paths=500, master_seed=2,
                                               x0=3.0, absorb_threshold=0.2, record_every=100))
    rep = moment_report(e)
    assert abs(rep.growth_rate) < 0.005
    assert rep.mean[-1] == pytest.approx(3.0, rel=0.02)


def test_moment_report_constant_path():
    e = simulate(GBM(0.0, 0.0), SimConfig(dt=0.1, horizon=1.0, n_paths=4, x0=2.0))
    rep = moment_report(e)
    assert np.all(rep.variance == 0.0) and np.all(rep.mean == 2.0)
    assert rep.growth_rate == pytest.approx(0.0, abs=1e-12)


def test_default_probability_zero_noise_is_exactly_zero():
    cfg = SimConfig(dt=1e-3, horizon=5.0, n_paths=100, x0=3.0, absorb_threshold=0.2)
    est = default_probability_mc(Langevin(QED, 0.0), cfg)
    assert est.probability == 0.0 and est.n_absorbed == 0 and est.mean_absorption_time is None


def test_default_probability_gbm_null():
    cfg = SimConfig(dt=1e-2, horizon=10.0, n_paths=20_000, master_seed=3, record_every=1000)
    for s in (0.2, 0.4):
        assert default_probability_mc(GBM(0.05, s), cfg).n_absorbed == 0


def test_default_probability_large_noise_positive():
    barrier = classify(QED).barrier_height
    sigma = math.sqrt(barrier)
    cfg = SimConfig(dt=1e-3, horizon=1.0, n_paths=2000, master_seed=4, x0=3.0,
                    absorb_threshold=0.2, record_every=1000)
    est = default_probability_mc(Langevin(QED, sigma), cfg)
    assert est.ci95[0] > 0
    assert est.mean_absorption_time <= 1.0 and est.to_dict()["ci95"][0] == est.ci95[0]


def test_default_probability_monotone_in_horizon_and_sigma():
    table = np.zeros((3, 3))
    for i, s in enumerate((0.4, 0.5, 0.65)):
        for j, h in enumerate((0.5, 1.0, 2.0)):
            cfg = SimConfig(dt=1e-3, horizon=h, n_paths=3000, master_seed=77, x0=3.0,
                            absorb_threshold=0.2, record_every=10**9)
            table[i, j] = default_probability_mc(Langevin(QED, s), cfg).probability
    assert np.all(np.diff(table, axis=1) >= 0)
    assert np.all(np.diff(table, axis=0) >= 0)
    assert table[-1, -1] > table[0, 0]


def test_default_probability_rejects_additive_model():
    with pytest.raises(ConfigError):
        default_probability_mc(ABM(0.0, 0.1), SimConfig(dt=0.1, horizon=1, n_paths=2))
