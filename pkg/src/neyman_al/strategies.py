"""Query strategies: Neyman stratified (NSRS), simple random (SRS), entropy (UES)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import entr

from .sampling import (
    DEFAULT_DEPTH,
    DEFAULT_N_THRESHOLD,
    MAX_CANDIDATES,
    SampleDraw,
    _positive_index,
    build_stratified_tree,
    collapse_scores,
    draw_stratified_sample,
    neyman_allocate,
)

NSRS = "NSRS"
SRS = "SRS"
UES = "UES"
KINDS = (NSRS, SRS, UES)


@dataclass(frozen=True)
class QueryStrategy:
    kind: str
    params: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        if self.kind == NSRS and self.params is None:
            raise ValueError("NSRS needs params (depth, n_threshold)")
        if self.kind != NSRS and self.params:
            raise ValueError(f"{self.kind} takes no params")

    @classmethod
    def nsrs(cls, depth=DEFAULT_DEPTH, n_threshold=DEFAULT_N_THRESHOLD, guardrail=None,
             max_candidates=MAX_CANDIDATES):
        return cls(NSRS, {"depth": int(depth), "n_threshold": int(n_threshold),
                          "guardrail": guardrail, "max_candidates": int(max_candidates)})

    @classmethod
    def srs(cls):
        return cls(SRS)

    @classmethod
    def ues(cls):
        return cls(UES)


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: np.ndarray
    fresh_ids: np.ndarray
    kind: str
    design_info: Optional[tuple] = None
    draw: Optional[SampleDraw] = None

    @property
    def supports_unbiased_estimation(self) -> bool:
        return self.kind in (NSRS, SRS)


def entropy(score) -> np.ndarray:
    """Shannon entropy in nats along the last axis, 0 log 0 = 0."""
    return entr(np.asarray(score, dtype=np.float64)).sum(axis=-1)


def _labeled_mask(pool, labeled_ids):
    if labeled_ids is None:
        return pool.labeled
    mask = np.zeros(pool.N, dtype=bool)
    ids = np.fromiter(labeled_ids, dtype=np.int64)
    if ids.size:
        mask[pool.positions(ids)] = True
    return mask


def select_batch(strategy, pool, scores, labeled_ids, n, rng, positive_set=(1,),
                 round_index=0) -> SelectionResult:
    """Choose the next batch of ``n`` units.

    ``labeled_ids=None`` reads the pool's own labeled flags.
    """
    if n < 1:
        raise ValueError("batch size must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    labeled = _labeled_mask(pool, labeled_ids)

    if strategy.kind == UES:
        unlabeled = np.nonzero(~labeled)[0]
        h = entropy(scores[unlabeled])
        # descending entropy, ties by id
        order = np.lexsort((pool.ids[unlabeled], -h))
        chosen = pool.ids[unlabeled[order[:n]]]
        return SelectionResult(selected_ids=chosen, fresh_ids=chosen.copy(), kind=UES)

    collapsed = collapse_scores(scores, positive_set)
    if strategy.kind == SRS:
        k = min(n, pool.N)
        chosen = np.sort(rng.choice(pool.ids, size=k, replace=False)) if k < pool.N else pool.ids.copy()
        was = labeled[pool.positions(chosen)]
        draw = SampleDraw(round=round_index, selected_ids=(chosen,), fresh_ids=chosen[~was],
                          reused_ids=chosen[was])
        return SelectionResult(selected_ids=chosen, fresh_ids=draw.fresh_ids, kind=SRS, draw=draw)

    p = strategy.params
    guard = p.get("guardrail")
    pos = _positive_index(positive_set, scores.shape[1])
    if guard is None:
        guard = len(pos) > 1
    per_class = scores[:, pos] if guard else None
    tree = build_stratified_tree(pool, collapsed, p["depth"], n, p["n_threshold"],
                                 guardrail=per_class, max_candidates=p.get("max_candidates", MAX_CANDIDATES))
    plan = neyman_allocate(tree, n, p["n_threshold"])
    draw = draw_stratified_sample(pool, tree, plan, pool.ids[labeled], rng, round_index)
    return SelectionResult(selected_ids=draw.all_ids, fresh_ids=draw.fresh_ids, kind=NSRS,
                           design_info=(tree, plan), draw=draw)


def selection_histogram(result, scores, bins=10, positive_set=(1,), pool=None) -> np.ndarray:
    """Counts of selected units' collapsed scores over equal-width bins of [0, 1]."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    scores = np.asarray(scores, dtype=np.float64)
    ids = result.selected_ids if hasattr(result, "selected_ids") else np.asarray(result)
    if scores.ndim == 2:
        collapsed = collapse_scores(scores, positive_set)
        rows = pool.positions(ids) if pool is not None else np.asarray(ids, dtype=np.int64)
        values = collapsed[rows]
    else:
        values = scores
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return counts
