import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from copulacca.kendall import kendall_tau_matrix
from copulacca.scca import CanonicalPair
from copulacca.simulation import (ScenarioError, SimScenario, generate_dataset,
                                  population_covariance, predictive_loss, replication_rng,
                                  rho_hat, run_study, score_pair, selection_rates)


def small_scenario(**kw):
    base = dict(n=60, p1=6, p2=6, block_sizes=(3, 3), support1=(0, 3), support2=(1, 4))
    base.update(kw)
    return SimScenario(**base)


def test_population_covariance_normalization():
    s1, s2, s12, w1, w2 = population_covariance(SimScenario())
    assert w1 @ s1 @ w1 == pytest.approx(1.0, abs=1e-12)
    assert w2 @ s2 @ w2 == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(np.flatnonzero(w1), [0, 5, 10, 15, 20])
    assert rho_hat(w1, w2, s1, s2, s12) == pytest.approx(0.9, abs=1e-12)
    assert s1[0, 1] == pytest.approx(0.7)
    # block-diagonal: first block has six members
    assert s2[5, 6] == 0.0 and s2[0, 5] == pytest.approx(0.7)


def test_rho_hat_examples():
    s1, s2, s12, w1, w2 = population_covariance(small_scenario())
    assert rho_hat(np.zeros(6), w2, s1, s2, s12) == 0.0
    # w1 orthogonal to S12 w2
    v = s12 @ w2
    u = np.zeros(6)
    u[[0, 1]] = [v[1], -v[0]]
    assert rho_hat(u, w2, s1, s2, s12) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=6), rng.normal(size=6)
    brute = abs(sum(a[i] * s12[i, j] * b[j] for i in range(6) for j in range(6)))
    brute /= math.sqrt(sum(a[i] * s1[i, j] * a[j] for i in range(6) for j in range(6)))
    brute /= math.sqrt(sum(b[i] * s2[i, j] * b[j] for i in range(6) for j in range(6)))
    assert rho_hat(a, b, s1, s2, s12) == pytest.approx(brute, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12))
def test_rho_hat_bounded_by_rho(values):
    s1, s2, s12, _, _ = population_covariance(small_scenario())
    a, b = np.array(values[:6]), np.array(values[6:])
    assert 0.0 <= rho_hat(a, b, s1, s2, s12) <= 0.9 + 1e-12


def test_predictive_loss_examples():
    s1, _, _, w1, _ = population_covariance(small_scenario())
    assert predictive_loss(w1, w1, s1) == pytest.approx(0.0, abs=1e-12)
    assert predictive_loss(2 * w1, w1, s1) == pytest.approx(0.0, abs=1e-12)
    assert predictive_loss(np.zeros(6), w1, s1) == 1.0
    # Sigma-orthogonal direction: remove the w1 component in the S1 metric
    v = np.arange(1.0, 7.0)
    v = v - (v @ s1 @ w1) * w1
    assert predictive_loss(v, w1, s1) == pytest.approx(1.0, abs=1e-12)


def test_selection_rates_examples():
    truth = [0, 5, 10, 15, 20]
    assert selection_rates(truth, truth, 25) == (1.0, 1.0, 5)
    assert selection_rates([], truth, 25) == (0.0, 1.0, 0)
    assert selection_rates(range(25), truth, 25) == (1.0, 0.0, 25)
    with pytest.raises(ValueError):
        selection_rates([1], [], 25)


def test_score_pair_of_truth():
    data = generate_dataset(small_scenario(seed=3))
    pair = CanonicalPair(data.w1, data.w2, 0.9, 0.0, 0.0, 1, True)
    m = score_pair(pair, data)
    assert m.rho_hat == pytest.approx(0.9, abs=1e-12)
    assert m.loss1 == pytest.approx(0.0, abs=1e-12)
    assert (m.tpr1, m.tnr1, m.size1) == (1.0, 1.0, 2)


def test_generation_is_deterministic():
    a = generate_dataset(small_scenario(seed=11))
    b = generate_dataset(small_scenario(seed=11))
    np.testing.assert_array_equal(a.x1, b.x1)
    np.testing.assert_array_equal(a.perm2, b.perm2)
    c = generate_dataset(small_scenario(seed=12))
    assert not np.array_equal(a.x1, c.x1)


def test_permutation_tracks_truth():
    sc = small_scenario(seed=5)
    data = generate_dataset(sc)
    s1, _, _, w1, _ = population_covariance(sc)
    np.testing.assert_array_equal(data.w1, w1[data.perm1])
    np.testing.assert_array_equal(data.sigma1, s1[np.ix_(data.perm1, data.perm1)])
    np.testing.assert_array_equal(np.sort(data.support1), np.sort(np.argsort(data.perm1)[[0, 3]]))


def test_copula_zero_continuous_columns_are_shifted_latent():
    sc = small_scenario(type1="continuous", type2="continuous", permute=False, seed=2)
    data = generate_dataset(sc)
    rng = replication_rng(sc.seed, 0)
    s1, s2, s12, _, _ = population_covariance(sc)
    joint = np.block([[s1, s12], [s12.T, s2]])
    vals, vecs = np.linalg.eigh(joint)
    z = rng.standard_normal((sc.n, 12)) @ (vecs * np.sqrt(vals)).T
    b = rng.integers(0, 2, 12).astype(float)
    np.testing.assert_array_equal(data.x1, z[:, :6] + b[:6])
    np.testing.assert_array_equal(data.x2, z[:, 6:] + b[6:])


def test_truncation_at_zero_gives_half_zeros():
    sc = small_scenario(n=10_000, shift=False, seed=4)
    data = generate_dataset(sc)
    frac = (data.x1 == 0).mean(axis=0)
    np.testing.assert_allclose(frac, 0.5, atol=0.02)


def test_copula_one_zero_proportions_spread():
    sc = SimScenario(n=10_000, copula=1, seed=6)
    data = generate_dataset(sc)
    frac = (data.x1 == 0).mean(axis=0)
    # exp side cutoff 1.5: latent cutoff log(1.5) with shift 0 or 1
    expected = {stats.norm.cdf(math.log(1.5)), stats.norm.cdf(math.log(1.5) - 1)}
    assert frac.min() < 0.45 and frac.max() > 0.55
    for f in frac:
        assert min(abs(f - e) for e in expected) < 0.02


def test_default_cutoffs():
    assert SimScenario(copula=1).cutoff(1) == 1.5
    assert SimScenario(copula=1).cutoff(2) == 0.0
    assert SimScenario(copula=2).cutoff(2) == 0.0
    assert SimScenario(copula=2, trunc_const2=0.3).cutoff(2) == 0.3


def test_kendall_tau_invariant_across_copulas():
    # identical latent draws; cutoffs mapped through the copula transform
    base = dict(n=80, p1=6, p2=6, block_sizes=(3, 3), support1=(0, 3), support2=(1, 4), seed=9)
    taus = []
    for copula, c1, c2 in ((0, 0.4, -0.2), (1, math.exp(0.4), -0.2),
                           (2, math.exp(0.4), (-0.2) ** 3)):
        data = generate_dataset(SimScenario(copula=copula, trunc_const1=c1, trunc_const2=c2,
                                            **base))
        taus.append(kendall_tau_matrix(np.hstack([data.x1, data.x2])))
    np.testing.assert_array_equal(taus[0], taus[1])
    np.testing.assert_array_equal(taus[0], taus[2])


def test_continuous_margins_look_normal():
    sc = SimScenario(n=10_000, p1=3, p2=3, block_sizes=(3,), support1=(0,), support2=(0,),
                     type1="continuous", type2="continuous", shift=False, permute=False)
    passes = 0
    crit = 1.63 / math.sqrt(sc.n)  # asymptotic 1% critical value
    for seed in range(100):
        data = generate_dataset(sc, replication_rng(seed, 0))
        passes += stats.kstest(data.x1[:, 1], "norm").statistic < crit
    assert passes >= 95


@pytest.mark.parametrize("field, value", [
    ("copula", 3), ("rho", 1.0), ("gamma1", -1.0), ("n", 1), ("block_sizes", (6, 6)),
    ("support1", (0, 30)), ("type1", "ordinal"), ("n", 10.5), ("shift", 1),
])
def test_scenario_validation_names_field(field, value):
    with pytest.raises(ScenarioError) as info:
        SimScenario(**{field: value})
    assert info.value.path.startswith(field)


def test_scenario_from_dict_rejects_unknown_keys():
    with pytest.raises(ScenarioError, match="colour"):
        SimScenario.from_dict({"colour": 1})
    sc = SimScenario.from_dict({"copula": 2, "support1": [1, 2]})
    assert SimScenario.from_dict(sc.to_dict()) == sc


def test_run_study_reproducible_and_thread_independent():
    sc = small_scenario(seed=21)
    methods = ("kendall_bic1", "pearson_bic2")
    a = run_study(sc, methods, replications=3, n_jobs=1)
    b = run_study(sc, methods, replications=3, n_jobs=3)
    assert a.rows == b.rows
    assert a.summary == b.summary
    assert [r["replication"] for r in a.rows] == [0, 0, 1, 1, 2, 2]
    for row in a.rows:
        assert 0.0 <= row["rho_hat"] <= 0.9 + 1e-12
        assert 0.0 <= row["loss1"] <= 1.0
    with pytest.raises(ValueError):
        run_study(sc, ("kendall_aic",), replications=1)


def test_run_study_curves():
    sc = small_scenario(seed=22)
    grid = np.geomspace(0.01, 0.7, 5)
    res = run_study(sc, ("kendall_bic1",), replications=2, curve_grid=grid, n_jobs=1)
    c = res.curves["kendall_bic1"]
    assert c.shape == (5, 4)
    assert np.all((c >= 0) & (c <= 1))
    # the largest penalty selects no more than the smallest
    assert c[-1, 0] <= c[0, 0] and c[-1, 1] <= c[0, 1]
    j = res.to_json()
    assert len(j["curves"]["kendall_bic1"]["fpr1"]) == 5
