import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_extrema, quartic
from qedlab import (Kind, QuarticPotential, Shape, ShapeError, classify, critical_points, drift,
                    evaluate, from_microstructure, log_price_potential, nearest_barrier)

# exact zeros or magnitudes >= 1e-6; subnormal-scale coefficients put roots near 1e300
_mag = st.floats(1e-6, 5, allow_nan=False)
coef = st.one_of(st.just(0.0), _mag, _mag.map(lambda v: -v))
pos = st.one_of(st.just(0.0), _mag)

# global minimum at 3.3, local minimum at 0, barrier top at 1.2
FIG2_LEFT = QuarticPotential(theta=-3.96, kappa=-4.5, g=1.0)


def test_evaluate_examples():
    assert evaluate(QuarticPotential(2, 3, 4), 1.0) == 1.0
    assert evaluate(QuarticPotential(0.7, -1.1, 2.3), 0.0) == 0.0
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(evaluate(QuarticPotential.gbm(0.05), x), -0.025 * x**2, rtol=1e-15)


def test_drift_examples():
    assert drift(QuarticPotential(1, 1, 1), 1.0) == -1.0
    assert drift(QuarticPotential(0.05), 2.0) == pytest.approx(0.1, rel=1e-15)
    assert drift(QuarticPotential(0.3, -2, 4), 0.0) == 0.0


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        QuarticPotential(float("nan"))
    with pytest.raises(ValueError):
        QuarticPotential(1.0, float("inf"))


def test_critical_points_gbm_single_maximum():
    cps = critical_points(QuarticPotential(1.0))
    assert [(c.location, c.kind) for c in cps] == [(0.0, Kind.MAXIMUM)]


def test_critical_points_convex_quartic_only_zero():
    cps = critical_points(QuarticPotential(-1.0, 0.0, 1.0))
    assert [(c.location, c.kind) for c in cps] == [(0.0, Kind.MINIMUM)]


def test_fig2_left_three_points_match_grid_oracle():
    cps = critical_points(FIG2_LEFT)
    assert [c.kind for c in cps] == [Kind.MINIMUM, Kind.MAXIMUM, Kind.MINIMUM]
    np.testing.assert_allclose([c.location for c in cps], [0.0, 1.2, 3.3], atol=1e-12)
    mins, maxs = grid_extrema(-3.96, -4.5, 1.0, lo=-1.0, hi=6.0, step=1e-4)
    np.testing.assert_allclose(mins, [0.0, 3.3], atol=1e-4)
    np.testing.assert_allclose(maxs, [1.2], atol=1e-4)
    u = quartic(-3.96, -4.5, 1.0, np.array([0.0, 3.3]))
    assert u[1] < u[0]  # 3.3 is the global minimum


def test_fig2_left_classified_metastable():
    rep = classify(FIG2_LEFT)
    assert rep.shape_label is Shape.METASTABLE
    assert rep.metastable_location == 0.0
    assert rep.barrier_location == pytest.approx(1.2, abs=1e-12)
    assert rep.barrier_height == pytest.approx(float(quartic(-3.96, -4.5, 1.0, 1.2)), rel=1e-12)
    assert rep.barrier_height > 0


def test_classify_gbm_inverted_parabola():
    rep = classify(QuarticPotential.gbm(0.05))
    assert rep.shape_label is Shape.INVERTED_PARABOLA
    assert rep.barrier_height is None


def test_classify_symmetric_double_well():
    rep = classify(QuarticPotential(2.0, 0.0, 0.5))
    assert rep.shape_label is Shape.DOUBLE_WELL
    mins = [c.location for c in rep.minima]
    np.testing.assert_allclose(mins, [-2.0, 2.0], rtol=1e-14)
    assert rep.barrier_height == pytest.approx(2.0, rel=1e-12)  # U(0) - U(+-2) = 0 - (-2)


def test_classify_single_well_and_degenerate():
    assert classify(QuarticPotential(-1.0, 0.0, 1.0)).shape_label is Shape.SINGLE_WELL
    assert classify(QuarticPotential(0.0)).shape_label is Shape.DEGENERATE
    # g < 0 with kappa = 0: unbounded below on both sides, no well
    assert classify(QuarticPotential(1.0, 0.0, -1.0)).shape_label is Shape.DEGENERATE


def test_classify_metastable_at_zero():
    # g = 0, kappa > 0: cubic unbounded below as x -> -inf, well at 0, barrier at theta/kappa < 0
    rep = classify(QuarticPotential(-1.0, 1.0, 0.0))
    assert rep.shape_label is Shape.METASTABLE_AT_ZERO
    assert rep.metastable_location == 0.0
    assert rep.barrier_location == pytest.approx(-1.0)
    assert rep.barrier_height == pytest.approx(1.0 / 6.0)


def test_merged_roots_triple_root_at_zero():
    # U = x^4/4: U' = x^3, triple root, a minimum
    cps = critical_points(QuarticPotential(0.0, 0.0, 1.0))
    assert [(c.location, c.kind) for c in cps] == [(0.0, Kind.MINIMUM)]
    # U = x^3/3: double root of U' at 0, an inflection
    cps = critical_points(QuarticPotential(0.0, 1.0, 0.0))
    assert [(c.location, c.kind) for c in cps] == [(0.0, Kind.INFLECTION)]


def test_double_root_away_from_zero_is_inflection():
    # U' = x (x - 1)^2 -> theta = -1, kappa = -2, g = 1
    cps = critical_points(QuarticPotential(-1.0, -2.0, 1.0))
    kinds = {round(c.location, 9): c.kind for c in cps}
    assert kinds == {0.0: Kind.MINIMUM, 1.0: Kind.INFLECTION}


def test_nearest_barrier():
    top = nearest_barrier(QuarticPotential(-6.0, -5.0, 1.0), 3.0)
    assert top.location == pytest.approx(2.0) and top.kind is Kind.MAXIMUM
    with pytest.raises(ShapeError):
        nearest_barrier(QuarticPotential(-1.0, 0.0, 1.0), 0.0)


def test_from_microstructure_examples():
    bare = from_microstructure(0.02, 0.01, 0.04, 1.0, 1.0, 2.0, impacted_base_flow=False)
    assert (bare.theta, bare.kappa, bare.g) == pytest.approx((0.05, 1.0, 1.0), abs=1e-15)
    impacted = from_microstructure(0.02, 0.01, 0.04, 1.0, 1.0, 2.0)
    assert (impacted.theta, impacted.kappa, impacted.g) == pytest.approx((-0.03, 1.0, 1.0),
                                                                         abs=1e-15)
    p = from_microstructure(0.03, 0.01, 0.04, 7.0, -3.0, 1.0)
    assert (p.kappa, p.g) == (0.0, 0.0)
    assert p.theta == pytest.approx(0.02)
    assert from_microstructure(0.03, 0.01, 0.04, 7.0, -3.0, 1.0,
                               impacted_base_flow=False).theta == pytest.approx(0.06)
    assert from_microstructure(0.0, 0.0, 0.0, 3.0, 5.0, 0.3).theta == 0.0


def test_log_price_potential_examples():
    assert log_price_potential(0.1, 0.0) == -0.1
    assert log_price_potential(0.02, 0.2) == pytest.approx(0.0, abs=1e-15)
    assert log_price_potential(0.0, 0.2) == pytest.approx(0.02, rel=1e-14)
    with pytest.raises(ValueError):
        log_price_potential(0.1, -0.1)


@settings(max_examples=200, deadline=None)
@given(coef, coef, pos)
def test_root_certification(theta, kappa, g):
    p = QuarticPotential(theta, kappa, g)
    tol = 1e-9
    for c in critical_points(p, tol):
        bound = tol * (1 + abs(c.location) ** 3) * max(p.scale, 1e-300)
        assert abs(p.gradient(c.location)) <= bound
        assert c.potential_value == evaluate(p, c.location)


@settings(max_examples=200, deadline=None)
@given(coef, coef, pos)
def test_kind_consistent_with_curvature(theta, kappa, g):
    p = QuarticPotential(theta, kappa, g)
    for c in critical_points(p):
        curv = p.curvature(c.location)
        flat = abs(curv) <= 1e-9 * p.scale * (1 + c.location**2)
        if c.kind is Kind.MINIMUM:
            assert curv > 0 or flat
        elif c.kind is Kind.MAXIMUM:
            assert curv < 0 or flat
        else:
            assert flat


@settings(max_examples=200, deadline=None)
@given(coef, coef, pos)
def test_barrier_height_invariant(theta, kappa, g):
    rep = classify(QuarticPotential(theta, kappa, g))
    has = rep.shape_label in (Shape.METASTABLE, Shape.METASTABLE_AT_ZERO, Shape.DOUBLE_WELL)
    assert (rep.barrier_height is not None) == has
    if has:
        assert rep.barrier_height >= 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6),
       st.floats(0.1, 4, allow_nan=False))
def test_microstructure_map_linear_in_phi_lambda(args, s):
    r_f, c, u_bar, phi, lam, mu = args
    base = from_microstructure(r_f, c, u_bar, phi, lam, mu)
    scaled = from_microstructure(r_f, c, u_bar, s * phi, s * lam, mu)
    assert scaled.theta == base.theta
    assert scaled.kappa == pytest.approx(s * base.kappa, rel=1e-15, abs=1e-300)
    assert scaled.g == pytest.approx(s * base.g, rel=1e-15, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6),
       st.floats(-3, 3, allow_nan=False))
def test_mapped_drift_matches_polynomial_exactly(args, x):
    p = from_microstructure(*args)
    assert drift(p, x) == p.theta * x - p.kappa * x * x - p.g * x * x * x


def test_microstructure_map_affine_in_each_argument():
    ref = np.array([0.02, 0.01, 0.04, 0.7, -0.3, 1.8])
    vals = lambda a: np.array(list(from_microstructure(*a).to_dict().values()))
    for i in range(6):
        lo, mid, hi = ref.copy(), ref.copy(), ref.copy()
        lo[i] -= 0.5
        hi[i] += 0.5
        np.testing.assert_allclose(vals(mid), 0.5 * (vals(lo) + vals(hi)), atol=1e-14)


def test_gradient_finite_difference_grid():
    p = QuarticPotential(-3.96, -4.5, 1.0)
    for x in np.linspace(-4, 6, 41):
        h = 1e-5 * max(1.0, abs(x))
        fd = (evaluate(p, x + h) - evaluate(p, x - h)) / (2 * h)
        assert abs(fd - p.gradient(x)) <= 1e-6 * max(1.0, abs(fd))


def test_shape_report_nonnegative_points():
    rep = classify(QuarticPotential(2.0, 0.0, 0.5))
    assert [c.location for c in rep.nonnegative_points] == [0.0, pytest.approx(2.0)]
    d = rep.to_dict()
    assert d["shape_label"] == "DOUBLE_WELL" and len(d["critical_points"]) == 3
    assert math.isclose(d["barrier_height"], 2.0)
