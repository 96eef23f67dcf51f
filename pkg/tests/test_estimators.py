import numpy as np
import pytest

from conftest import binary_pool
from neyman_al.estimators import (
    combine_rounds,
    design_variance,
    round_estimate,
    srs_design_variance,
    srs_reference_variance,
    stratified_estimate,
)
from neyman_al.oracle import BUILTIN_CASES, EnumerationCase, enumerate_design, run_oracle_check
from neyman_al.sampling import (
    AllocationPlan,
    build_stratified_tree,
    draw_stratified_sample,
    neyman_allocate,
)


def test_census_is_exact_with_zero_variance():
    strata = [np.array([0, 1, 1, 0]), np.array([1, 1, 1, 0, 0, 0])]
    est = stratified_estimate([4, 6], strata, [1])
    assert est.estimate[0] == pytest.approx(5 / 10, abs=1e-15)
    assert est.variance_est[0] == 0.0


def test_variance_estimate_closed_form():
    # single stratum, p_hat = 0.1, n = 10000 out of N = 50000
    labels = np.r_[np.ones(1000), np.zeros(9000)].astype(int)
    est = stratified_estimate([50000], [labels], [1])
    expected = (1 - 10000 / 50000) * (10000 / 9999) * 0.09 / 10000
    assert est.variance_est[0] == pytest.approx(expected, rel=1e-12)
    assert srs_reference_variance(0.1, 10000) == pytest.approx(9.0e-6, rel=1e-12)


def test_reconstruct_matches_estimate(rng):
    sizes = [30, 50, 20]
    samples = [rng.integers(0, 3, 5), rng.integers(0, 3, 8), rng.integers(0, 3, 4)]
    est = stratified_estimate(sizes, samples, [1, 2])
    np.testing.assert_allclose(est.reconstruct(), est.estimate, atol=1e-15)


def test_singleton_stratum_is_flagged():
    est = stratified_estimate([10, 5], [np.array([1]), np.array([0, 1])], [1])
    assert "singleton_stratum" in est.flags
    assert est.per_stratum[0].s2[0] == 0.0


def test_missing_sample_in_stratum_raises():
    with pytest.raises(ValueError):
        stratified_estimate([10, 5], [np.array([], dtype=int), np.array([0, 1])], [1])


def test_combine_rounds():
    a = stratified_estimate([10], [np.array([0, 1])], [1], 1)
    b = stratified_estimate([10], [np.array([1, 1, 0, 0])], [1], 2)
    c = combine_rounds([a, b])
    assert c.estimate[0] == pytest.approx((a.estimate[0] + b.estimate[0]) / 2)
    assert c.variance_est[0] == pytest.approx((a.variance_est[0] + b.variance_est[0]) / 4)
    assert "approximate" in c.variance_note
    with pytest.raises(ValueError):
        combine_rounds([])


def test_srs_reference_validation():
    with pytest.raises(ValueError):
        srs_reference_variance(0.1, 0)
    with pytest.raises(ValueError):
        srs_reference_variance(1.5, 10)


def test_single_stratum_design_variance_is_srs():
    labels = np.r_[np.ones(30), np.zeros(70)].astype(int)
    got = design_variance([labels], [20], [1])[0]
    assert got == pytest.approx(srs_design_variance(0.3, 20, 100), rel=1e-12)


def test_round_estimate_uses_reused_labels(rng):
    p = rng.random(200)
    labels = (rng.random(200) < p).astype(int)
    pool = binary_pool(p, labels)
    tree = build_stratified_tree(pool, p, 3, 40)
    plan = neyman_allocate(tree, 40)
    pool.mark_labeled(np.arange(0, 200, 3), 0)
    draw = draw_stratified_sample(pool, tree, plan, pool, rng, 1)
    with pytest.raises(ValueError):
        round_estimate(draw, tree, pool, [1])
    pool.mark_labeled(draw.fresh_ids, 1)
    est = round_estimate(draw, tree, pool, [1])
    assert est.n_labeled_fresh == len(draw.fresh_ids)
    expect = sum(s.W_h * labels[ids].mean() for s, ids in zip(tree.strata, draw.selected_ids))
    assert est.estimate[0] == pytest.approx(expect, abs=1e-15)


def test_enumerated_design_is_unbiased():
    for case in BUILTIN_CASES:
        res = enumerate_design(case)
        assert res.max_abs_bias < 1e-12
        assert res.variance_rel_error <= 0.05


def test_enumeration_matches_closed_form_design_variance():
    case = EnumerationCase("t", ((0, 1, 1, 0, 0), (1, 0, 1, 1, 1, 0)), (2, 3))
    res = enumerate_design(case)
    dv = design_variance([np.array(s) for s in case.strata], case.n_h, [1])
    np.testing.assert_allclose(res.design_variance, dv, rtol=1e-12)


def test_monte_carlo_agrees_with_enumeration():
    strata = [np.array([0, 0, 1, 0, 1]), np.array([1, 1, 0, 1])]
    labels = np.concatenate(strata)
    pool = binary_pool(np.r_[np.full(5, 0.2), np.full(4, 0.8)], labels)
    pool.labeled[:] = True
    tree = build_stratified_tree(pool, pool.scores[:, 1], 2, 4)
    plan = AllocationPlan(n_h=np.array([2, 2]), n_requested=4, n_threshold=2)
    rng = np.random.default_rng(3)
    ests = [round_estimate(draw_stratified_sample(pool, tree, plan, pool, rng), tree, pool, [1]).estimate[0]
            for _ in range(20000)]
    exact = enumerate_design(EnumerationCase("mc", tuple(map(tuple, strata)), (2, 2)))
    assert np.mean(ests) == pytest.approx(labels.mean(), abs=0.005)
    assert np.var(ests) == pytest.approx(exact.design_variance[0], rel=0.05)


def test_oracle_check_reports(capsys):
    assert run_oracle_check()
    assert "PASS" in capsys.readouterr().out
