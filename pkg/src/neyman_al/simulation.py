"""Synthetic populations, the active-learning loop and Monte Carlo replication."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .estimators import (
    combine_rounds,
    design_variance,
    round_estimate,
    srs_design_variance,
    srs_reference_variance,
)
from .models import (
    LogisticHyper,
    OracleScoreModel,
    gaussian_posterior,
    predict_scores,
    train_logistic,
)
from .sampling import (
    DEFAULT_DEPTH,
    DEFAULT_N_THRESHOLD,
    MAX_CANDIDATES,
    SamplePool,
    _positive_index,
    build_stratified_tree,
    collapse_scores,
    neyman_allocate,
    single_stratum_tree,
)
from .strategies import KINDS, NSRS, SRS, UES, QueryStrategy, select_batch, selection_histogram

# seed streams within one replication
_INIT, _NOISE, _TRAIN = 0, 1, 2
_STRATEGY_BASE = 10


def largest_remainder(quotas, total):
    """Round non-negative real quotas to integers summing to ``total``."""
    quotas = np.asarray(quotas, dtype=np.float64)
    base = np.floor(quotas).astype(np.int64)
    extra = int(total - base.sum())
    if extra > 0:
        order = np.lexsort((np.arange(len(quotas)), -(quotas - base)))
        base[order[:extra]] += 1
    return base


@dataclass(frozen=True)
class FeatureModel:
    means: tuple
    sigma: float = 1.0

    @property
    def d(self) -> int:
        return len(self.means[0]) if self.means else 0


@dataclass(frozen=True)
class PopulationSpec:
    N: int
    K: int
    class_rates: tuple
    feature_model: FeatureModel
    seed: int = 0


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "oracle"
    noise_sigma: float = 0.0
    gamma: float = 1.0
    hyper: LogisticHyper = field(default_factory=LogisticHyper)


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationSpec
    strategies: tuple = KINDS
    model: ModelSpec = field(default_factory=ModelSpec)
    n_init: tuple = (1000,)
    batch_sizes: tuple = (2000, 2000, 2000, 2000)
    positive_set: tuple = (1,)
    replications: int = 2000
    seed: int = 0
    depth: int = DEFAULT_DEPTH
    n_threshold: int = DEFAULT_N_THRESHOLD
    max_candidates: int = MAX_CANDIDATES
    guardrail: Optional[bool] = None
    histogram_bins: int = 10
    matched_cost: bool = True

    def __post_init__(self):
        N = self.population.N
        for n0 in self.n_init:
            if n0 < 0 or n0 + sum(self.batch_sizes) > N:
                raise ValueError("n_init + sum(batch_sizes) must not exceed N")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.batch_sizes or min(self.batch_sizes) < 1:
            raise ValueError("batch_sizes must be a non-empty list of positive sizes")
        for s in self.strategies:
            if s not in KINDS:
                raise ValueError(f"unknown strategy {s!r}")
        _positive_index(self.positive_set, self.population.K)

    @property
    def rounds(self) -> int:
        return len(self.batch_sizes)

    def strategy(self, kind) -> QueryStrategy:
        if kind == NSRS:
            return QueryStrategy.nsrs(self.depth, self.n_threshold, self.guardrail, self.max_candidates)
        return QueryStrategy(kind)


def generate_population(spec: PopulationSpec, rng=None) -> SamplePool:
    """Pool with exact class counts and Gaussian class-conditional features."""
    fm = spec.feature_model
    if fm.d < 1:
        raise ValueError("feature dimension must be >= 1")
    if spec.N < spec.K:
        raise ValueError("N must be at least K")
    if len(spec.class_rates) != spec.K or len(fm.means) != spec.K:
        raise ValueError("class_rates and feature means need one entry per class")
    rates = np.asarray(spec.class_rates, dtype=np.float64)
    if np.any(rates < 0) or abs(rates.sum() - 1.0) > 1e-9:
        raise ValueError("class_rates must be a probability vector")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    counts = largest_remainder(rates * spec.N, spec.N)
    labels = rng.permutation(np.repeat(np.arange(spec.K), counts))
    means = np.asarray(fm.means, dtype=np.float64)
    X = means[labels] + fm.sigma * rng.standard_normal((spec.N, fm.d))
    probs = gaussian_posterior(X, means, fm.sigma, counts / spec.N)
    return SamplePool(ids=np.arange(spec.N), labels=labels, scores=np.full((spec.N, spec.K), 1.0 / spec.K),
                      K=spec.K, features=X, true_probs=probs)


def replication_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class RoundRecord:
    round: int
    batch_size: int
    cost: int
    cumulative_labeled: int
    estimate: list
    variance_est: Optional[list]
    design_variance: Optional[list]
    histogram: list
    strata: int = 1
    matched_budget: Optional[int] = None


@dataclass
class ReplicationRecord:
    index: int
    strategy: str
    n_init: int
    rounds: list
    final_estimate: list
    final_variance_est: Optional[list]
    complete: bool = True


def _fit(config, pool, rep_seed_key):
    ms = config.model
    if ms.kind == "oracle":
        noise_seed = int(replication_rng(config.seed, *rep_seed_key, _NOISE).integers(2**63 - 1))
        return OracleScoreModel(ms.noise_sigma, ms.gamma, noise_seed)
    rows = np.nonzero(pool.labeled)[0]
    if rows.size == 0:
        return train_logistic(pool.features[:1], pool.labels[:1], pool.K, ms.hyper)
    rng = replication_rng(config.seed, *rep_seed_key, _TRAIN, int(pool.labeled.sum()))
    return train_logistic(pool.features[rows], pool.labels[rows], pool.K, ms.hyper, rng)


def _matched_budget(config, pool, collapsed, per_class, n_t, classes):
    """Smallest NSRS budget whose design variance reaches SRS's at ``n_t``."""
    labels = pool.labels
    p = np.array([(labels == m).mean() for m in classes])
    target = srs_design_variance(p, n_t, pool.N)

    def nsrs_var(n):
        tree = build_stratified_tree(pool, collapsed, config.depth, n, config.n_threshold,
                                     guardrail=per_class, max_candidates=config.max_candidates)
        plan = neyman_allocate(tree, n, config.n_threshold)
        strata = [labels[pool.positions(s.member_ids)] for s in tree.strata]
        return design_variance(strata, plan.n_h, classes)

    lo, hi = 1, n_t
    if np.any(nsrs_var(hi) > target):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if np.all(nsrs_var(mid) <= target):
            hi = mid
        else:
            lo = mid + 1
    return int(lo)


def run_active_learning(config: ExperimentConfig, rng=None, pool=None, strategy=NSRS, n_init=None,
                        index=0, n_init_index=0) -> ReplicationRecord:
    """One replication of the label-estimate-retrain loop for one strategy.

    Seeds are derived from ``(config.seed, n_init_index, index)`` so a
    replication is reproducible on its own; ``rng`` overrides the strategy
    stream when given.
    """
    if pool is None:
        pool = generate_population(config.population)
    pool = SamplePool(ids=pool.ids, labels=pool.labels, scores=pool.scores, K=pool.K,
                      features=pool.features, true_probs=pool.true_probs)
    n_init = config.n_init[0] if n_init is None else int(n_init)
    key = (n_init_index, index)
    classes = _positive_index(config.positive_set, pool.K)
    srat = rng if rng is not None else replication_rng(config.seed, *key, _STRATEGY_BASE + KINDS.index(strategy))
    qs = config.strategy(strategy)

    if n_init > 0:
        init = replication_rng(config.seed, *key, _INIT).choice(pool.ids, size=n_init, replace=False)
        pool.mark_labeled(init, 0)
    model = _fit(config, pool, key)

    records = []
    complete = True
    scores = None
    for t, n_t in enumerate(config.batch_sizes, start=1):
        if pool.labeled.all():
            complete = False
            break
        if scores is None:
            scores = predict_scores(model, pool)
            pool.scores = scores
        res = select_batch(qs, pool, scores, None, n_t, srat, config.positive_set, t)
        pool.mark_labeled(res.fresh_ids, t)
        hist = selection_histogram(res, scores, config.histogram_bins, config.positive_set, pool)
        strata = 1
        matched = None
        if res.supports_unbiased_estimation:
            if res.kind == NSRS:
                tree, plan = res.design_info
                strata = tree.L
                n_h = plan.n_h
            else:
                tree = single_stratum_tree(pool.ids)
                n_h = [len(res.selected_ids)]
            est = round_estimate(res.draw, tree, pool, classes)
            stratum_labels = [pool.labels[pool.positions(s.member_ids)] for s in tree.strata]
            dvar = design_variance(stratum_labels, n_h, classes)
            if res.kind == NSRS and index == 0 and config.matched_cost:
                collapsed = collapse_scores(scores, config.positive_set)
                guard = config.guardrail if config.guardrail is not None else len(classes) > 1
                matched = _matched_budget(config, pool, collapsed, scores[:, classes] if guard else None,
                                          n_t, classes)
            records.append((est, RoundRecord(
                round=t, batch_size=n_t, cost=len(res.fresh_ids),
                cumulative_labeled=int(pool.labeled.sum()), estimate=est.estimate.tolist(),
                variance_est=est.variance_est.tolist(), design_variance=dvar.tolist(),
                histogram=hist.tolist(), strata=strata, matched_budget=matched)))
        else:
            if len(res.selected_ids) < n_t:
                complete = False
            lab = pool.labels[pool.labeled]
            running = [float((lab == m).mean()) for m in classes]
            records.append((None, RoundRecord(
                round=t, batch_size=n_t, cost=len(res.fresh_ids),
                cumulative_labeled=int(pool.labeled.sum()), estimate=running, variance_est=None,
                design_variance=None, histogram=hist.tolist())))
        if config.model.kind != "oracle":
            # the oracle is static, so its scores carry over between rounds
            model = _fit(config, pool, key)
            scores = None

    rounds = [r for _, r in records]
    estimates = [e for e, _ in records if e is not None]
    if estimates:
        final = combine_rounds(estimates)
        final_est, final_var = final.estimate.tolist(), final.variance_est.tolist()
    elif rounds:
        final_est, final_var = rounds[-1].estimate, None
    else:
        final_est, final_var = [float("nan")] * len(classes), None
    return ReplicationRecord(index=index, strategy=strategy, n_init=n_init, rounds=rounds,
                             final_estimate=final_est, final_variance_est=final_var, complete=complete)


def _replicate(args):
    config, pool, n_init, n_init_index, index = args
    return [run_active_learning(config, pool=pool, strategy=s, n_init=n_init, index=index,
                                n_init_index=n_init_index) for s in config.strategies]


def _var(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x.var(axis=0, ddof=1)) if x.shape[0] > 1 else 0.0


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def aggregate(config, pool, records):
    """Monte Carlo summary; every number derives from ``records`` alone."""
    classes = _positive_index(config.positive_set, pool.K)
    true = {m: float((pool.labels == m).mean()) for m in classes}
    R = config.replications
    rows = []
    finals = []
    hist_rows = []
    by_key = {}
    for rec in records:
        by_key.setdefault((rec.n_init, rec.strategy), []).append(rec)
    for (n0, strat), recs in sorted(by_key.items(), key=lambda kv: (kv[0][0], KINDS.index(kv[0][1]))):
        for t in range(1, config.rounds + 1):
            at = [r.rounds[t - 1] for r in recs if len(r.rounds) >= t]
            if not at:
                continue
            n_t = config.batch_sizes[t - 1]
            for j, m in enumerate(classes):
                est = [r.estimate[j] for r in at]
                rows.append({
                    "n_init": n0, "strategy": strat, "positive_class": m, "round": t,
                    "batch_size": n_t, "replications": len(at), "true_rate": true[m],
                    "mean_estimate": float(np.mean(est)),
                    "bias": float(np.mean(est)) - true[m],
                    "mse": float(np.mean((np.asarray(est) - true[m]) ** 2)),
                    "empirical_variance": _var(est),
                    "mean_variance_est": _mean([r.variance_est[j] if r.variance_est else None for r in at]),
                    "design_variance": _mean([r.design_variance[j] if r.design_variance else None for r in at]),
                    "srs_reference_variance": srs_reference_variance(true[m], n_t),
                    "mean_cost": float(np.mean([r.cost for r in at])),
                    "mean_cumulative_labeled": float(np.mean([r.cumulative_labeled for r in at])),
                    "mean_strata": float(np.mean([r.strata for r in at])),
                    "matched_budget": next((r.matched_budget for r in at if r.matched_budget is not None), None),
                })
            h = np.mean([r.histogram for r in at], axis=0)
            bins = len(h)
            for b in range(bins):
                hist_rows.append({
                    "n_init": n0, "strategy": strat, "round": t, "bin": b,
                    "bin_lower": b / bins, "bin_upper": (b + 1) / bins, "mean_count": float(h[b]),
                    "share": float(h[b] / h.sum()) if h.sum() > 0 else 0.0,
                })
        for j, m in enumerate(classes):
            fe = [r.final_estimate[j] for r in recs]
            sd = math.sqrt(_var(fe))
            finals.append({
                "n_init": n0, "strategy": strat, "positive_class": m, "true_rate": true[m],
                "mean_estimate": float(np.mean(fe)), "empirical_variance": _var(fe),
                "standard_error": sd / math.sqrt(len(fe)),
                "mean_variance_est": _mean([r.final_variance_est[j] if r.final_variance_est else None for r in recs]),
                "complete_fraction": float(np.mean([r.complete for r in recs])),
            })

    # ratios against SRS at matching (n_init, class, round)
    srs = {(r["n_init"], r["positive_class"], r["round"]): r for r in rows if r["strategy"] == SRS}
    for r in rows:
        ref = srs.get((r["n_init"], r["positive_class"], r["round"]))
        ok = ref is not None and r["strategy"] != UES and ref["empirical_variance"] > 0
        r["variance_ratio_vs_srs"] = r["empirical_variance"] / ref["empirical_variance"] if ok else None
        mb = r["matched_budget"]
        r["cost_ratio_matched_variance"] = mb / r["batch_size"] if mb is not None else None

    cold = None
    if len(config.n_init) > 1:
        cold = cold_start_summary(rows, config.n_init, classes)
    return {"true_rates": {str(m): true[m] for m in classes}, "rounds": rows, "final": finals,
            "histograms": hist_rows, "cold_start": cold, "replications": R}


def cold_start_summary(rows, n_inits, classes):
    """Round-1 sensitivity to the initial labeled set size.

    Both strategies are compared on the mean squared error of their round-1
    class-rate estimate (for unbiased NSRS this is its variance), so the two
    gaps share units.
    """
    out = {"n_init": list(n_inits), "per_class": []}
    for m in classes:
        def pick(strat, n0):
            return next((r for r in rows if r["strategy"] == strat and r["n_init"] == n0
                         and r["positive_class"] == m and r["round"] == 1), None)
        nsrs = [pick(NSRS, n0) for n0 in n_inits]
        ues = [pick(UES, n0) for n0 in n_inits]
        entry = {"positive_class": m}
        if all(nsrs):
            v = [r["empirical_variance"] for r in nsrs]
            mse = [r["mse"] for r in nsrs]
            entry.update(nsrs_round1_variance=v, nsrs_round1_mse=mse, nsrs_mse_gap=max(mse) - min(mse),
                         nsrs_relative_gap=(max(mse) - min(mse)) / max(mse) if max(mse) > 0 else 0.0)
        if all(ues):
            e = [abs(r["mean_estimate"] - r["true_rate"]) for r in ues]
            mse = [r["mse"] for r in ues]
            entry.update(ues_round1_abs_error=e, ues_round1_mse=mse, ues_mse_gap=max(mse) - min(mse),
                         ues_relative_gap=(max(mse) - min(mse)) / max(mse) if max(mse) > 0 else 0.0)
        if all(nsrs) and all(ues):
            entry["nsrs_more_robust"] = entry["nsrs_mse_gap"] < entry["ues_mse_gap"]
        out["per_class"].append(entry)
    return out


def monte_carlo(config: ExperimentConfig, threads=None, pool=None):
    """Run every strategy for ``config.replications`` replications.

    Returns ``(summary, records)``. Replication seeds depend only on the
    replication index, so execution order never changes a result.
    """
    if pool is None:
        pool = generate_population(config.population)
    jobs = [(config, pool, n0, i0, r) for i0, n0 in enumerate(config.n_init)
            for r in range(config.replications)]
    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_replicate, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_replicate(j) for j in jobs]
    records = [rec for batch in results for rec in batch]
    summary = aggregate(config, pool, records)
    summary["kernel_backend"] = kernels.BACKEND
    return summary, records
