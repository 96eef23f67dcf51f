"""Stratified class-rate estimates, variance estimates and round combination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StratumSummary:
    W_h: float
    N_h: int
    n_h: int
    ybar: np.ndarray
    s2: np.ndarray


@dataclass(frozen=True)
class RoundEstimate:
    round: int
    estimate: np.ndarray
    variance_est: np.ndarray
    n_labeled_fresh: int
    per_stratum: tuple
    flags: tuple = ()

    def reconstruct(self) -> np.ndarray:
        return sum(s.W_h * s.ybar for s in self.per_stratum)


@dataclass(frozen=True)
class FinalEstimate:
    estimate: np.ndarray
    rounds: int
    variance_est: np.ndarray
    per_round: tuple
    variance_note: str = "approximate: rounds treated as independent"


def stratified_estimate(stratum_sizes, sample_labels, positive_set, round_index=0, n_fresh=0):
    """Estimate from per-stratum label samples.

    ``sample_labels[h]`` holds the labels of the units drawn from stratum h.
    Returns a RoundEstimate with one entry per class in ``positive_set``.
    """
    classes = np.asarray(sorted(positive_set), dtype=np.int64)
    sizes = np.asarray(stratum_sizes, dtype=np.float64)
    N = sizes.sum()
    est = np.zeros(len(classes))
    var = np.zeros(len(classes))
    per = []
    flags = set()
    for N_h, labels in zip(sizes, sample_labels):
        labels = np.asarray(labels)
        n_h = len(labels)
        W = N_h / N
        if n_h == 0:
            if N_h > 0:
                raise ValueError("stratum with positive weight has no sampled units")
            continue
        ybar = (labels[:, None] == classes[None, :]).mean(axis=0)
        if n_h > 1:
            s2 = n_h / (n_h - 1) * ybar * (1.0 - ybar)
        else:
            s2 = np.zeros(len(classes))
            if N_h > 1:
                flags.add("singleton_stratum")
        fpc = 1.0 - n_h / N_h
        est += W * ybar
        var += W * W * fpc * s2 / n_h
        per.append(StratumSummary(W_h=W, N_h=int(N_h), n_h=n_h, ybar=ybar, s2=s2))
    return RoundEstimate(
        round=int(round_index), estimate=np.clip(est, 0.0, 1.0), variance_est=np.maximum(var, 0.0),
        n_labeled_fresh=int(n_fresh), per_stratum=tuple(per), flags=tuple(sorted(flags)),
    )


def round_estimate(draw, tree, pool, positive_set) -> RoundEstimate:
    """Stratified estimate sum_h W_h * ybar_h from a completed draw.

    Every selected unit, freshly annotated or reused, contributes its label.
    """
    pos = pool.positions(draw.all_ids)
    if not np.all(pool.labeled[pos]):
        raise ValueError("every selected unit must be labeled before estimation")
    labels = [pool.labels[pool.positions(ids)] for ids in draw.selected_ids]
    return stratified_estimate(tree.counts, labels, positive_set, draw.round, len(draw.fresh_ids))


def combine_rounds(rounds) -> FinalEstimate:
    rounds = tuple(rounds)
    if not rounds:
        raise ValueError("need at least one round estimate")
    T = len(rounds)
    est = np.mean([r.estimate for r in rounds], axis=0)
    var = np.sum([r.variance_est for r in rounds], axis=0) / T**2
    return FinalEstimate(estimate=est, rounds=T, variance_est=var, per_round=rounds)


def srs_reference_variance(p, n):
    """p(1 - p) / n, the with-replacement SRS variance of a proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p must lie in [0, 1]")
    out = p * (1.0 - p) / n
    return float(out) if out.ndim == 0 else out


def srs_design_variance(p, n, N):
    """Exact variance of the sample proportion under SRS without replacement."""
    if N <= 1:
        return 0.0
    return (N - n) / (N - 1) * p * (1.0 - p) / n


def design_variance(stratum_labels, n_h, positive_set):
    """True design variance of the stratified estimator given every unit's label.

    ``stratum_labels[h]`` is the full label vector of stratum h.
    """
    classes = np.asarray(sorted(positive_set), dtype=np.int64)
    N = sum(len(x) for x in stratum_labels)
    var = np.zeros(len(classes))
    for labels, k in zip(stratum_labels, n_h):
        labels = np.asarray(labels)
        N_h = len(labels)
        if N_h <= 1 or k <= 0:
            continue
        p = (labels[:, None] == classes[None, :]).mean(axis=0)
        S2 = N_h / (N_h - 1) * p * (1.0 - p)
        W = N_h / N
        var += W * W * (1.0 - k / N_h) * S2 / k
    return var
