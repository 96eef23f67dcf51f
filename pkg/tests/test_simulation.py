from dataclasses import replace

import numpy as np
import pytest

from neyman_al.simulation import (
    ExperimentConfig,
    FeatureModel,
    ModelSpec,
    PopulationSpec,
    generate_population,
    largest_remainder,
    monte_carlo,
    run_active_learning,
)
from neyman_al.models import LogisticHyper


def small_config(**kw):
    pop = PopulationSpec(N=2000, K=2, class_rates=(0.9, 0.1),
                         feature_model=FeatureModel(((0.0, 0.0), (1.25, 1.25))), seed=3)
    base = dict(population=pop, strategies=("NSRS", "SRS", "UES"), n_init=(100,),
                batch_sizes=(200, 200, 200), replications=4, seed=9, matched_cost=False)
    base.update(kw)
    return ExperimentConfig(**base)


def test_largest_remainder():
    assert largest_remainder([0.5, 0.5, 1.0], 2).sum() == 2
    assert largest_remainder([1.4, 2.6], 4).tolist() == [1, 3]


def test_population_has_exact_counts():
    cfg = small_config()
    pool = generate_population(cfg.population)
    assert np.bincount(pool.labels).tolist() == [1800, 200]
    np.testing.assert_allclose(pool.true_probs.sum(axis=1), 1.0)
    again = generate_population(cfg.population)
    assert np.array_equal(pool.features, again.features)


def test_population_validation():
    with pytest.raises(ValueError):
        generate_population(PopulationSpec(10, 2, (0.5, 0.6), FeatureModel(((0,), (1,)))))
    with pytest.raises(ValueError):
        small_config(n_init=(1500,))


def test_replication_is_deterministic():
    cfg = small_config()
    pool = generate_population(cfg.population)
    a = run_active_learning(cfg, pool=pool, strategy="NSRS", index=2)
    b = run_active_learning(cfg, pool=pool, strategy="NSRS", index=2)
    c = run_active_learning(cfg, pool=pool, strategy="NSRS", index=3)
    assert a == b
    assert a.final_estimate != c.final_estimate


def test_cost_accounting():
    cfg = small_config()
    pool = generate_population(cfg.population)
    for strat in ("NSRS", "SRS", "UES"):
        rec = run_active_learning(cfg, pool=pool, strategy=strat, index=0)
        total = 100 + sum(r.cost for r in rec.rounds)
        assert rec.rounds[-1].cumulative_labeled == total
        for r in rec.rounds:
            assert r.cost <= r.batch_size
            assert sum(r.histogram) == r.batch_size
        if strat == "UES":
            assert all(r.cost == r.batch_size for r in rec.rounds)


def test_census_round_is_exact():
    pop = PopulationSpec(N=300, K=2, class_rates=(0.8, 0.2), feature_model=FeatureModel(((0.0,), (1.0,))))
    cfg = ExperimentConfig(population=pop, strategies=("NSRS", "SRS"), n_init=(0,), batch_sizes=(300,),
                           replications=1, matched_cost=False)
    for strat in ("NSRS", "SRS"):
        rec = run_active_learning(cfg, strategy=strat)
        assert rec.final_estimate[0] == pytest.approx(0.2, abs=1e-15)
        assert rec.final_variance_est[0] == 0.0


def test_depth_one_equals_simple_random_sampling_design():
    cfg = small_config(depth=1, replications=1)
    pool = generate_population(cfg.population)
    rec = run_active_learning(cfg, pool=pool, strategy="NSRS")
    assert all(r.strata == 1 for r in rec.rounds)
    srs = run_active_learning(cfg, pool=pool, strategy="SRS")
    # same single-stratum design, so the exact design variances coincide
    for a, b in zip(rec.rounds, srs.rounds):
        assert a.design_variance == pytest.approx(b.design_variance, rel=1e-12)


def test_ues_running_mean_uses_all_labels():
    cfg = small_config(replications=1)
    pool = generate_population(cfg.population)
    rec = run_active_learning(cfg, pool=pool, strategy="UES")
    assert rec.final_variance_est is None
    assert rec.final_estimate == rec.rounds[-1].estimate


def test_monte_carlo_matches_single_replications():
    cfg = small_config()
    pool = generate_population(cfg.population)
    summary, records = monte_carlo(cfg, threads=1, pool=pool)
    by = {(r.strategy, r.index): r for r in records}
    alone = run_active_learning(cfg, pool=pool, strategy="SRS", index=3)
    assert by[("SRS", 3)] == alone
    rows = [r for r in summary["rounds"] if r["strategy"] == "SRS"]
    assert [r["round"] for r in rows] == [1, 2, 3]
    assert all(r["variance_ratio_vs_srs"] == 1.0 for r in rows)


def test_parallel_matches_serial():
    cfg = small_config(replications=3, strategies=("NSRS",))
    pool = generate_population(cfg.population)
    a, _ = monte_carlo(cfg, threads=1, pool=pool)
    b, _ = monte_carlo(cfg, threads=2, pool=pool)
    assert a == b


def test_logistic_loop_runs():
    cfg = small_config(model=ModelSpec("logistic", hyper=LogisticHyper(learning_rate=0.5, epochs=5,
                                                                        batch_size=200)),
                       replications=1, n_init=(50, 200))
    summary, records = monte_carlo(cfg, threads=1)
    assert len(records) == 6
    assert summary["cold_start"]["n_init"] == [50, 200]
    assert "nsrs_more_robust" in summary["cold_start"]["per_class"][0]


def test_matched_budget_not_above_batch():
    cfg = small_config(matched_cost=True, replications=1, strategies=("NSRS", "SRS"))
    summary, _ = monte_carlo(cfg, threads=1)
    for r in summary["rounds"]:
        if r["strategy"] == "NSRS" and r["matched_budget"] is not None:
            assert 1 <= r["matched_budget"] <= r["batch_size"]
            assert r["cost_ratio_matched_variance"] <= 1.0


def test_multiclass_summary_has_row_per_positive_class():
    pop = PopulationSpec(N=3000, K=3, class_rates=(0.8, 0.1, 0.1),
                         feature_model=FeatureModel(((0.0, 0.0), (2.0, 0.0), (0.0, 2.0))))
    cfg = ExperimentConfig(population=pop, strategies=("NSRS", "SRS"), n_init=(100,), batch_sizes=(300, 300),
                           positive_set=(1, 2), replications=2, matched_cost=False)
    summary, _ = monte_carlo(cfg, threads=1)
    classes = {(r["strategy"], r["positive_class"]) for r in summary["rounds"]}
    assert classes == {("NSRS", 1), ("NSRS", 2), ("SRS", 1), ("SRS", 2)}
    with pytest.raises(ValueError):
        replace(cfg, positive_set=(0, 1, 2))
