import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copulacca.bridge import (R_MAX, PairKind, bridge, bridge_cc, bridge_derivative,
                              estimate_threshold, invert_bridge, invert_bridges, pair_kind)
from copulacca.data import VariableType
from copulacca.mvn import std_normal_quantile

THRESHOLDS = (-1.0, 0.0, 1.0)


def kind_cases(deltas=THRESHOLDS):
    """(kind, dj, dk) covering each kind's threshold arguments."""
    yield PairKind.CC, None, None
    for d in deltas:
        yield PairKind.CB, None, d
        yield PairKind.TC, d, None
        for e in deltas:
            yield PairKind.BB, d, e
            yield PairKind.TB, d, e
            yield PairKind.TT, d, e


# Reference values from scipy.stats.multivariate_normal.cdf applied to the
# bridge formulas (abseps=releps=1e-11). scipy's 4-dimensional integration
# is only good to about 1e-6, confirmed against an adaptive quadrature of a
# conditional trivariate CDF, hence the wider tolerance for TT.
REFERENCE = [
    ("BB", 0.5, 0.3, -0.4, 0.1402320056, 1e-8),
    ("BB", -0.7, 0.0, 1.0, -0.1323010562, 1e-8),
    ("CB", 0.6, None, 0.5, 0.2440427898, 1e-8),
    ("CB", -0.3, None, -1.0, -0.0819017552, 1e-8),
    ("TC", 0.5, 0.2, None, 0.2596379373, 1e-7),
    ("TC", -0.8, -0.5, None, -0.5556794247, 1e-7),
    ("TB", 0.4, 0.3, -0.2, 0.1322309886, 1e-7),
    ("TB", -0.6, -0.7, 0.4, -0.2485831924, 1e-7),
    ("TT", 0.6, 0.0, 0.0, 0.3051087900, 2e-6),
    ("TT", 0.3, 0.5, -0.5, 0.1247746831, 2e-6),
    ("TT", -0.7, -0.3, 0.8, -0.2065632952, 2e-6),
]


@pytest.mark.parametrize("kind, r, dj, dk, expected, tol", REFERENCE)
def test_bridge_matches_reference(kind, r, dj, dk, expected, tol):
    assert bridge(kind, r, dj, dk) == pytest.approx(expected, abs=tol)


def test_cc_closed_form():
    assert bridge_cc(0.0) == 0.0
    assert bridge_cc(0.5) == pytest.approx(1 / 3, abs=1e-15)
    assert bridge_cc(1.0) == 1.0


@pytest.mark.parametrize("kind, dj, dk", list(kind_cases((-1.3, 0.0, 0.7))))
def test_zero_correlation_gives_zero_tau(kind, dj, dk):
    assert abs(bridge(kind, 0.0, dj, dk)) < 1e-12


def test_bb_at_zero_thresholds_is_half_cc():
    # 2 * (1/4 + asin(r)/(2 pi) - 1/4) = asin(r)/pi
    for r in (-0.6, 0.2, 0.9):
        assert bridge("BB", r, 0.0, 0.0) == pytest.approx(math.asin(r) / math.pi, abs=1e-13)


@pytest.mark.parametrize("r", [-0.7, 0.3, 0.85])
def test_no_truncation_limit_recovers_cc(r):
    assert bridge("TC", r, -8.0) == pytest.approx(bridge_cc(r), abs=1e-4)
    assert bridge("TT", r, -8.0, -8.0) == pytest.approx(bridge_cc(r), abs=1e-3)


@pytest.mark.parametrize("kind, dj, dk", list(kind_cases()))
def test_strictly_increasing(kind, dj, dk):
    grid = np.linspace(-0.9, 0.9, 200)
    values = np.array([bridge(kind, r, dj, dk) for r in grid])
    assert np.all(np.diff(values) > 0)


def true_increment(kind, a, b, dj, dk):
    # Simpson's rule on the analytic slope, free of cancellation in F itself
    m = (a + b) / 2
    return (b - a) / 6 * (bridge_derivative(kind, a, dj, dk) + 4 * bridge_derivative(kind, m, dj, dk)
                          + bridge_derivative(kind, b, dj, dk))


@pytest.mark.parametrize("kind, dj, dk", list(kind_cases()))
def test_flat_steps_only_below_double_resolution(kind, dj, dk):
    # Near r = +-0.99 with cutoffs in opposite tails the true increments of F
    # fall below the spacing of doubles at |F|; any non-increasing step must
    # be one of those, and off by no more than evaluation error.
    grid = np.linspace(-0.99, 0.99, 200)
    values = np.array([bridge(kind, r, dj, dk) for r in grid])
    for i in np.flatnonzero(np.diff(values) <= 0):
        assert true_increment(kind, grid[i], grid[i + 1], dj, dk) < np.spacing(abs(values[i]))
        assert values[i + 1] - values[i] > -1e-15


def test_tt_accurate_at_boundary_correlation():
    # conditioning plus composite 6 x 32-point Gauss-Legendre per axis
    assert bridge("TT", -0.99, 1.0, 1.0) == pytest.approx(-2 * 0.02517148960005437, abs=1e-13)


@pytest.mark.parametrize("kind, dj, dk", list(kind_cases()))
def test_derivative_matches_finite_difference(kind, dj, dk):
    h = 1e-6
    for r in (-0.8, -0.1, 0.45, 0.9):
        fd = (bridge(kind, r + h, dj, dk) - bridge(kind, r - h, dj, dk)) / (2 * h)
        assert bridge_derivative(kind, r, dj, dk) == pytest.approx(fd, rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("kind, dj, dk", list(kind_cases()))
def test_round_trip(kind, dj, dk):
    for r in np.linspace(-0.9, 0.9, 19):
        tau = bridge(kind, r, dj, dk)
        r_star = invert_bridge(tau, kind, dj, dk)
        assert abs(r_star - r) <= 1e-5
        assert abs(bridge(kind, r_star, dj, dk) - tau) <= 1e-8


def test_inverse_examples():
    assert invert_bridge(1 / 3, "CC") == pytest.approx(0.5, abs=1e-12)
    assert abs(invert_bridge(0.0, "TT", 0.4, -0.3)) <= 1e-8
    assert invert_bridge(bridge("TT", 0.6, 0.0, 0.0), "TT", 0.0, 0.0) == pytest.approx(0.6, abs=1e-6)


@pytest.mark.parametrize("kind, dj, dk", [("CC", None, None), ("TT", 0.0, 0.0),
                                          ("BB", 0.5, -0.5), ("TC", 1.0, None)])
def test_out_of_range_tau_is_clamped(kind, dj, dk):
    assert invert_bridge(0.9999, kind, dj, dk) == pytest.approx(R_MAX, abs=1e-12)
    assert invert_bridge(-0.9999, kind, dj, dk) == pytest.approx(-R_MAX, abs=1e-12)


def test_vectorized_inversion_matches_scalar():
    rng = np.random.default_rng(0)
    kinds = [PairKind.TT, PairKind.TB, PairKind.CB, PairKind.CC, PairKind.BB, PairKind.TC]
    taus = rng.uniform(-0.4, 0.4, 12)
    ks = [kinds[i % 6] for i in range(12)]
    djs = rng.uniform(-1, 1, 12)
    dks = rng.uniform(-1, 1, 12)
    out = invert_bridges(taus, [k.code for k in ks], djs, dks)
    for i, k in enumerate(ks):
        assert out[i] == invert_bridge(taus[i], k, djs[i], dks[i])


def test_inverse_slope_bounded_where_bridges_are_not_flat():
    grid = np.linspace(-0.95, 0.95, 39)
    deltas = np.linspace(-2, 2, 9)
    for kind in (PairKind.CB, PairKind.TC):
        for d in deltas:
            dj, dk = (None, d) if kind is PairKind.CB else (d, None)
            assert min(bridge_derivative(kind, r, dj, dk) for r in grid) > 1e-3
    for kind in (PairKind.BB, PairKind.TB, PairKind.TT):
        for dj in deltas:
            for dk in deltas:
                for r in np.linspace(-0.3, 0.3, 13):
                    assert bridge_derivative(kind, r, dj, dk) > 1e-3


def test_binary_slope_vanishes_at_extreme_thresholds():
    # dF/dr = 2 phi2(dj, dk; r) exactly, so no uniform bound on the inverse
    # slope can hold once both cutoffs sit in the same tail and r is negative
    r, d = -0.95, -2.0
    phi2 = math.exp(-(2 * d * d - 2 * r * d * d) / (2 * (1 - r * r))) / (
        2 * math.pi * math.sqrt(1 - r * r))
    assert bridge_derivative("BB", r, d, d) == pytest.approx(2 * phi2, rel=1e-6)
    assert 2 * phi2 < 1e-30


@pytest.mark.parametrize("r", [1.0, -1.0, 1.5])
def test_mixed_bridges_reject_boundary_correlation(r):
    with pytest.raises(ValueError):
        bridge("TT", r, 0.0, 0.0)


def test_missing_threshold_is_an_error():
    with pytest.raises(ValueError):
        bridge("TB", 0.3, 0.1)


def test_threshold_estimates():
    col = np.array([0, 0, 0, 0, 1.5, 2.0, 0.3, 4.0, 0.2, 9.0])
    assert estimate_threshold(col, "truncated") == pytest.approx(std_normal_quantile(0.4))
    b = np.array([1, 0, 0, 1, 0, 0, 0, 0, 1, 0], dtype=float)
    assert estimate_threshold(b, "binary") == pytest.approx(std_normal_quantile(0.7))
    # all-zero and zero-free columns are clamped to finite cutoffs
    assert estimate_threshold(np.zeros(10), "truncated") == pytest.approx(std_normal_quantile(0.95))
    assert estimate_threshold(np.ones(10), "truncated") == pytest.approx(std_normal_quantile(0.05))
    with pytest.raises(ValueError):
        estimate_threshold(col, "continuous")


def test_pair_kind_orientation():
    C, B, T = VariableType.CONTINUOUS, VariableType.BINARY, VariableType.TRUNCATED
    assert pair_kind(T, T) == (PairKind.TT, False)
    assert pair_kind(B, C) == (PairKind.CB, True)
    assert pair_kind(C, T) == (PairKind.TC, True)
    assert pair_kind(T, B) == (PairKind.TB, False)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_tt_round_trip_property(r, dj, dk):
    tau = bridge("TT", r, dj, dk)
    r_star = invert_bridge(tau, "TT", dj, dk)
    assert abs(bridge("TT", r_star, dj, dk) - tau) <= 1e-8
