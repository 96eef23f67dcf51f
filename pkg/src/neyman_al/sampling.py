"""Sample pool, stratification tree, Neyman allocation and stratified draws."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

DEFAULT_DEPTH = 5
DEFAULT_N_THRESHOLD = 2
MAX_CANDIDATES = 256
SIMPLEX_TOL = 1e-9


class EmptyPoolError(ValueError):
    pass


@dataclass(frozen=True)
class Unit:
    id: int
    true_label: int
    score: np.ndarray
    labeled: bool = False
    label_round: Optional[int] = None


@dataclass
class SamplePool:
    """Columnar population of units.

    ``labels`` are the hidden true labels; strategies only read them for
    units whose ``labeled`` flag is set. ``true_probs`` holds the generating
    posterior when the pool is synthetic (used by the oracle score model).
    """

    ids: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    K: int
    features: Optional[np.ndarray] = None
    true_probs: Optional[np.ndarray] = None
    labeled: np.ndarray = None
    label_round: np.ndarray = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        N = len(self.ids)
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if N < 1:
            raise EmptyPoolError("pool has no units")
        if len(np.unique(self.ids)) != N:
            raise ValueError("unit ids must be unique")
        if self.labels.shape != (N,) or self.scores.shape != (N, self.K):
            raise ValueError("labels/scores shape does not match the pool")
        if self.labeled is None:
            self.labeled = np.zeros(N, dtype=bool)
        if self.label_round is None:
            self.label_round = np.full(N, -1, dtype=np.int64)
        self._index = None
        self._identity = bool(np.array_equal(self.ids, np.arange(N)))

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def units(self) -> list[Unit]:
        return [self.unit(i) for i in range(self.N)]

    def unit(self, i: int) -> Unit:
        r = int(self.label_round[i])
        return Unit(
            id=int(self.ids[i]),
            true_label=int(self.labels[i]),
            score=self.scores[i].copy(),
            labeled=bool(self.labeled[i]),
            label_round=r if r >= 0 else None,
        )

    def positions(self, ids) -> np.ndarray:
        """Map unit ids to row positions."""
        ids = np.asarray(ids, dtype=np.int64)
        if self._identity:
            if ids.size and (ids.min() < 0 or ids.max() >= self.N):
                raise KeyError("unknown unit id")
            return ids
        if self._index is None:
            order = np.argsort(self.ids, kind="stable")
            self._index = (self.ids[order], order)
        sorted_ids, order = self._index
        pos = np.searchsorted(sorted_ids, ids)
        if ids.size and (np.any(pos >= self.N) or np.any(sorted_ids[np.minimum(pos, self.N - 1)] != ids)):
            raise KeyError("unknown unit id")
        return order[pos]

    def with_scores(self, scores) -> "SamplePool":
        scores = np.asarray(scores, dtype=np.float64)
        check_simplex(scores)
        pool = SamplePool(
            ids=self.ids, labels=self.labels, scores=scores, K=self.K,
            features=self.features, true_probs=self.true_probs,
            labeled=self.labeled.copy(), label_round=self.label_round.copy(),
        )
        return pool

    def mark_labeled(self, ids, round_index: int) -> None:
        pos = self.positions(ids)
        new = pos[~self.labeled[pos]]
        self.labeled[new] = True
        self.label_round[new] = round_index

    @property
    def labeled_ids(self) -> np.ndarray:
        return self.ids[self.labeled]


def check_simplex(scores, tol=SIMPLEX_TOL):
    scores = np.asarray(scores)
    if np.any(scores < -tol) or np.any(scores > 1 + tol):
        raise ValueError("score components must lie in [0, 1]")
    if np.any(np.abs(scores.sum(axis=-1) - 1.0) > tol):
        raise ValueError("score vectors must sum to 1")


def _positive_index(positive_set, K):
    pos = sorted({int(k) for k in positive_set})
    if not pos or len(pos) >= K:
        raise ValueError("positive_set must be a nonempty proper subset of the classes")
    if pos[0] < 0 or pos[-1] >= K:
        raise ValueError(f"positive_set indices must lie in 0..{K - 1}")
    return pos


def collapse_scores(pool, positive_set) -> np.ndarray:
    """Sum of score components over ``positive_set`` for every unit."""
    scores = pool.scores if isinstance(pool, SamplePool) else np.asarray(pool, dtype=np.float64)
    pos = _positive_index(positive_set, scores.shape[1])
    out = scores[:, pos].sum(axis=1)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Stratum:
    lower: float
    upper: float
    member_ids: np.ndarray
    N_h: int
    W_h: float
    s2_proxy: float
    s2m_proxy: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StratifiedTree:
    thresholds: np.ndarray
    strata: tuple
    depth_limit: int
    objective_value: float
    n_budget: int
    n_threshold: int

    @property
    def L(self) -> int:
        return len(self.strata)

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.N_h for s in self.strata], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.W_h for s in self.strata])

    @property
    def s2(self) -> np.ndarray:
        return np.array([s.s2_proxy for s in self.strata])

    def stratum_of(self, collapsed) -> np.ndarray:
        """Stratum index for collapsed scores, intervals ``[x_h, x_{h+1})``."""
        return np.searchsorted(self.thresholds[1:-1], np.asarray(collapsed), side="right")


@dataclass(frozen=True)
class AllocationPlan:
    n_h: np.ndarray
    n_requested: int
    n_threshold: int
    clamped_to_N: bool = False

    @property
    def total(self) -> int:
        return int(self.n_h.sum())


@dataclass(frozen=True)
class SampleDraw:
    round: int
    selected_ids: tuple
    fresh_ids: np.ndarray
    reused_ids: np.ndarray

    @property
    def all_ids(self) -> np.ndarray:
        if not self.selected_ids:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(self.selected_ids)


def bernoulli_proxy(p):
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    return np.clip(p * (1.0 - p), 0.0, 0.25)


def allocate_counts(counts, s2, n, n_threshold):
    """Integer Neyman allocation for raw stratum sizes and variance proxies."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_threshold < 1:
        raise ValueError("n_threshold must be >= 1")
    counts = np.asarray(counts, dtype=np.int64)
    sds = np.sqrt(np.asarray(s2, dtype=np.float64))
    return kernels.neyman_counts(counts, sds, int(n), int(n_threshold))


def neyman_allocate(tree, n: int, n_threshold: int = DEFAULT_N_THRESHOLD) -> AllocationPlan:
    """Neyman allocation over the tree's strata, clamped to [n_threshold, N_h]."""
    n_h, n_eff = allocate_counts(tree.counts, tree.s2, n, n_threshold)
    return AllocationPlan(n_h=n_h, n_requested=int(n), n_threshold=int(n_threshold),
                          clamped_to_N=n_eff < n)


def candidate_split_objective(counts, s2, n_budget, n_threshold=DEFAULT_N_THRESHOLD) -> float:
    """Sum over strata of W_h^2 s_h^2 / n_h with n_h from the Neyman allocation.

    A stratification containing an empty stratum scores ``inf``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts <= 0):
        return math.inf
    n_h, _ = allocate_counts(counts, s2, n_budget, n_threshold)
    return float(kernels.objective(counts, np.asarray(s2, dtype=np.float64), n_h))


def class_variance_sums(counts, s2m, n_h):
    """Per-class sum of W_h^2 s_hm^2 / n_h; ``s2m`` has shape (L, M)."""
    counts = np.asarray(counts, dtype=np.float64)
    w2 = (counts / counts.sum()) ** 2
    s2m = np.asarray(s2m, dtype=np.float64).reshape(len(counts), -1)
    n_h = np.asarray(n_h, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(s2m > 0, w2[:, None] * s2m / n_h[:, None], 0.0)
    return terms.sum(axis=0)


def guardrail_check(counts, s2m, n_h, n_budget, s2m_total) -> bool:
    """True (accept) iff every positive class beats simple random sampling.

    Rejects when, for any class m, sum_h W_h^2 s_hm^2 / n_h >= s_m^2 / n.
    """
    lhs = class_variance_sums(counts, s2m, n_h)
    rhs = np.asarray(s2m_total, dtype=np.float64) / float(n_budget)
    return bool(np.all(lhs < rhs))


def _candidate_cuts(sorted_scores, lo, hi, max_candidates):
    seg = sorted_scores[lo:hi]
    breaks = np.nonzero(seg[1:] > seg[:-1])[0] + 1
    if breaks.size > max_candidates:
        pick = np.unique(np.round(np.linspace(0, breaks.size - 1, max_candidates)).astype(np.int64))
        breaks = breaks[pick]
    return breaks + lo


class _TreeBuilder:
    def __init__(self, collapsed, per_class, k, n_budget, n_threshold, guardrail,
                 max_candidates, backend):
        self.order = np.argsort(collapsed, kind="stable")
        self.sorted = collapsed[self.order]
        self.prefix = np.concatenate([[0.0], np.cumsum(self.sorted)])
        self.N = len(collapsed)
        self.k = k
        self.n = n_budget
        self.n_threshold = n_threshold
        self.guardrail = guardrail
        self.max_candidates = max_candidates
        self.kern = backend
        if per_class is not None:
            ps = per_class[self.order]
            self.class_prefix = np.vstack([np.zeros(ps.shape[1]), np.cumsum(ps, axis=0)])
            self.class_total = bernoulli_proxy(self.class_prefix[-1] / self.N)
        else:
            self.class_prefix = None
        self.leaves = [(0, self.N)]

    def s2_of(self, lo, hi):
        p = min(max((self.prefix[hi] - self.prefix[lo]) / (hi - lo), 0.0), 1.0)
        return min(p * (1.0 - p), 0.25)

    def s2m_of(self, lo, hi):
        return bernoulli_proxy((self.class_prefix[hi] - self.class_prefix[lo]) / (hi - lo))

    def stats(self, leaves):
        counts = np.array([hi - lo for lo, hi in leaves], dtype=np.int64)
        s2 = np.array([self.s2_of(lo, hi) for lo, hi in leaves])
        return counts, s2

    def global_objective(self, leaves):
        counts, s2 = self.stats(leaves)
        n_h, _ = self.kern.neyman_counts(counts, np.sqrt(s2), self.n, self.n_threshold)
        return float(self.kern.objective(counts, s2, n_h))

    def grow(self, node, depth):
        lo, hi = node
        if depth >= self.k or self.s2_of(lo, hi) == 0.0:
            return
        cuts = _candidate_cuts(self.sorted, lo, hi, self.max_candidates)
        if cuts.size == 0:
            return
        i = self.leaves.index(node)
        others = self.leaves[:i] + self.leaves[i + 1:]
        oc, os2 = self.stats(others)
        objs = np.asarray(self.kern.candidate_objectives(
            self.prefix, lo, hi, cuts, oc, os2, self.n, self.n_threshold))
        best = float(objs.min())
        if not math.isfinite(best):
            return
        current = self.global_objective(self.leaves)
        if not best < current * (1.0 - 1e-12):
            return
        tied = np.nonzero(np.isclose(objs, best, rtol=1e-12, atol=0.0))[0]
        if tied.size > 1:
            median = float(np.median(self.sorted[lo:hi]))
            thr = 0.5 * (self.sorted[cuts[tied] - 1] + self.sorted[cuts[tied]])
            tied = tied[np.lexsort((thr, np.abs(thr - median)))]
        cut = int(cuts[tied[0]])
        left, right = (lo, cut), (cut, hi)
        candidate = self.leaves[:i] + [left, right] + self.leaves[i + 1:]
        if self.guardrail and self.class_prefix is not None:
            counts, s2 = self.stats(candidate)
            n_h, _ = self.kern.neyman_counts(counts, np.sqrt(s2), self.n, self.n_threshold)
            s2m = np.vstack([self.s2m_of(a, b) for a, b in candidate])
            if not guardrail_check(counts, s2m, n_h, self.n, self.class_total):
                return
        self.leaves = candidate
        self.grow(left, depth + 1)
        self.grow(right, depth + 1)


def build_stratified_tree(pool, collapsed_scores, depth_limit=DEFAULT_DEPTH, n_budget=100,
                          n_threshold=DEFAULT_N_THRESHOLD, guardrail=None,
                          max_candidates=MAX_CANDIDATES, backend=None) -> StratifiedTree:
    """Greedy depth-first stratification of the collapsed score axis.

    Each split is the candidate threshold minimising the global objective
    over the whole stratification (Neyman allocation recomputed for every
    candidate). ``guardrail`` is either None or an ``(N, M)`` array of
    per-positive-class scores; when given, a split whose allocation leaves
    any class no better than simple random sampling is refused.
    """
    collapsed = np.asarray(collapsed_scores, dtype=np.float64)
    N = len(collapsed)
    if N == 0:
        raise EmptyPoolError("cannot stratify an empty pool")
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    ids = pool.ids if isinstance(pool, SamplePool) else np.asarray(pool, dtype=np.int64)
    if len(ids) != N:
        raise ValueError("collapsed_scores length must equal the pool size")
    per_class = None
    if guardrail is not None:
        per_class = np.asarray(guardrail, dtype=np.float64).reshape(N, -1)

    kern = kernels if backend is None else kernels.get_backend(backend)
    builder = _TreeBuilder(collapsed, per_class, int(depth_limit), int(n_budget), int(n_threshold),
                           per_class is not None, int(max_candidates), kern)
    builder.grow((0, N), 1)

    leaves = builder.leaves
    thresholds = [0.0]
    for lo, hi in leaves[:-1]:
        thresholds.append(0.5 * (builder.sorted[hi - 1] + builder.sorted[hi]))
    thresholds.append(1.0)
    strata = []
    for h, (lo, hi) in enumerate(leaves):
        members = np.sort(ids[builder.order[lo:hi]])
        s2m = builder.s2m_of(lo, hi) if per_class is not None else None
        strata.append(Stratum(
            lower=float(thresholds[h]), upper=float(thresholds[h + 1]), member_ids=members,
            N_h=hi - lo, W_h=(hi - lo) / N, s2_proxy=builder.s2_of(lo, hi), s2m_proxy=s2m,
        ))
    return StratifiedTree(
        thresholds=np.asarray(thresholds), strata=tuple(strata), depth_limit=int(depth_limit),
        objective_value=builder.global_objective(leaves), n_budget=int(n_budget),
        n_threshold=int(n_threshold),
    )


def single_stratum_tree(ids, collapsed_scores=None, n_budget=1, n_threshold=DEFAULT_N_THRESHOLD):
    """The trivial one-stratum design (simple random sampling)."""
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    s2 = 0.0
    if collapsed_scores is not None:
        s2 = float(bernoulli_proxy(np.mean(collapsed_scores)))
    N = len(ids)
    stratum = Stratum(lower=0.0, upper=1.0, member_ids=ids, N_h=N, W_h=1.0, s2_proxy=s2)
    return StratifiedTree(
        thresholds=np.array([0.0, 1.0]), strata=(stratum,), depth_limit=1,
        objective_value=s2 / max(1, min(n_budget, N)), n_budget=int(n_budget),
        n_threshold=int(n_threshold),
    )


def draw_stratified_sample(pool, tree, plan, labeled_ids, rng, round_index=0) -> SampleDraw:
    """Draw ``n_h`` units uniformly without replacement from every stratum.

    All stratum members are eligible, labeled or not; the result is split
    into ids needing annotation and ids whose labels already exist.
    """
    if len(plan.n_h) != tree.L:
        raise ValueError("plan does not match the tree")
    selected = []
    for stratum, k in zip(tree.strata, plan.n_h):
        k = int(k)
        if k > stratum.N_h:
            raise RuntimeError(f"allocation {k} exceeds stratum size {stratum.N_h}")
        if k == stratum.N_h:
            chosen = stratum.member_ids.copy()
        else:
            chosen = rng.choice(stratum.member_ids, size=k, replace=False)
        selected.append(np.asarray(chosen, dtype=np.int64))
    all_ids = np.concatenate(selected) if selected else np.empty(0, dtype=np.int64)
    if isinstance(labeled_ids, SamplePool):
        was_labeled = labeled_ids.labeled[labeled_ids.positions(all_ids)]
    else:
        was_labeled = np.isin(all_ids, np.fromiter(labeled_ids, dtype=np.int64))
    return SampleDraw(
        round=int(round_index), selected_ids=tuple(selected),
        fresh_ids=all_ids[~was_labeled], reused_ids=all_ids[was_labeled],
    )
