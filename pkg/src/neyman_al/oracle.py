"""Exhaustive-enumeration checks of the stratified estimator on tiny populations."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .estimators import srs_design_variance, stratified_estimate


@dataclass(frozen=True)
class EnumerationCase:
    name: str
    strata: tuple  # label tuple per stratum
    n_h: tuple
    positive_set: tuple = (1,)


@dataclass(frozen=True)
class EnumerationResult:
    case: str
    draws: int
    true_rate: np.ndarray
    mean_estimate: np.ndarray
    max_abs_bias: float
    design_variance: np.ndarray
    mean_variance_est: np.ndarray
    variance_rel_error: float


BUILTIN_CASES = (
    EnumerationCase("A: N=12, two strata, plan (2,2)",
                    ((0, 0, 0, 0, 1, 0), (1, 1, 0, 1, 0, 1)), (2, 2)),
    EnumerationCase("B: N=12, three strata, plan (2,3,2)",
                    ((0, 0, 0, 1), (0, 1, 1, 0, 1), (1, 1, 0)), (2, 3, 2)),
    EnumerationCase("C: N=10, three classes, positives {1,2}",
                    ((0, 1, 0, 2, 0), (2, 1, 1, 0, 2)), (3, 2), (1, 2)),
    EnumerationCase("census: N=8, n_h = N_h",
                    ((0, 1, 0, 0), (1, 1, 0, 1)), (4, 4)),
    EnumerationCase("single stratum: N=10, n=4",
                    ((0, 1, 0, 0, 1, 0, 0, 1, 0, 0),), (4,)),
)


def enumerate_design(case: EnumerationCase) -> EnumerationResult:
    """Average the estimator over every possible stratified draw."""
    strata = [np.asarray(s) for s in case.strata]
    sizes = [len(s) for s in strata]
    classes = np.asarray(sorted(case.positive_set))
    all_labels = np.concatenate(strata)
    true = (all_labels[:, None] == classes[None, :]).mean(axis=0)

    per_stratum = [list(itertools.combinations(range(len(s)), k)) for s, k in zip(strata, case.n_h)]
    est_sum = np.zeros(len(classes))
    est_sq = np.zeros(len(classes))
    var_sum = np.zeros(len(classes))
    count = 0
    for combo in itertools.product(*per_stratum):
        samples = [s[list(idx)] for s, idx in zip(strata, combo)]
        r = stratified_estimate(sizes, samples, case.positive_set)
        est_sum += r.estimate
        est_sq += r.estimate**2
        var_sum += r.variance_est
        count += 1
    mean = est_sum / count
    dvar = est_sq / count - mean**2
    dvar = np.where(np.abs(dvar) < 1e-15, 0.0, dvar)
    mvar = var_sum / count
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(dvar > 0, np.abs(mvar - dvar) / dvar, np.abs(mvar - dvar))
    return EnumerationResult(
        case=case.name, draws=count, true_rate=true, mean_estimate=mean,
        max_abs_bias=float(np.max(np.abs(mean - true))), design_variance=dvar,
        mean_variance_est=mvar, variance_rel_error=float(np.max(rel)),
    )


def run_oracle_check(bias_tol=1e-12, variance_tol=0.05, out=print):
    """Run every built-in case; returns True when all pass."""
    start = time.perf_counter()
    ok = True
    for case in BUILTIN_CASES:
        res = enumerate_design(case)
        passed = res.max_abs_bias < bias_tol and res.variance_rel_error <= variance_tol
        line = (f"{'PASS' if passed else 'FAIL'}  {res.case}: draws={res.draws} "
                f"max|bias|={res.max_abs_bias:.3e} design_var={np.array2string(res.design_variance, precision=6)} "
                f"mean_var_est={np.array2string(res.mean_variance_est, precision=6)} "
                f"var_rel_err={res.variance_rel_error:.3e}")
        out(line)
        if case.name.startswith("census"):
            census_ok = np.all(res.design_variance == 0) and np.all(res.mean_variance_est == 0)
            out(f"{'PASS' if census_ok else 'FAIL'}  census variance is exactly zero")
            passed = passed and census_ok
        if len(case.strata) == 1:
            N, n = len(case.strata[0]), case.n_h[0]
            p = float(res.true_rate[0])
            analytic = srs_design_variance(p, n, N)
            rel = abs(res.design_variance[0] - analytic) / analytic
            srs_ok = rel < 1e-12
            out(f"{'PASS' if srs_ok else 'FAIL'}  single stratum vs closed form (N-n)/(N-1) p(1-p)/n: "
                f"rel_err={rel:.3e}")
            passed = passed and srs_ok
        ok = ok and passed
    elapsed = time.perf_counter() - start
    out(f"{'PASS' if ok else 'FAIL'}  oracle-check finished in {elapsed:.3f}s")
    return ok
