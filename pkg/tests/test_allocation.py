import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neyman_al import kernels
from neyman_al.sampling import (
    allocate_counts,
    candidate_split_objective,
    neyman_allocate,
    single_stratum_tree,
)

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])

strata = st.integers(1, 8).flatmap(lambda L: st.tuples(
    st.lists(st.integers(0, 60), min_size=L, max_size=L),
    st.lists(st.one_of(st.just(0.0), st.floats(0.0, 0.25)), min_size=L, max_size=L),
    st.integers(1, 300),
    st.integers(1, 6),
))


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_strata_hand_case(backend):
    # 100 * 0.15/0.20 and 100 * 0.05/0.20
    n_h, _ = kernels.get_backend(backend).neyman_counts([1000, 1000], [0.3, 0.1], 100, 2)
    assert n_h.tolist() == [75, 25]


@pytest.mark.parametrize("backend", BACKENDS)
def test_floor_then_renormalise(backend):
    k = kernels.get_backend(backend)
    assert k.neyman_counts([900, 100], [0.0, 0.3], 50, 2)[0].tolist() == [2, 48]
    # second stratum too small for its Neyman share: capped, rest goes to the first
    assert k.neyman_counts([900, 30], [0.0, 0.3], 50, 2)[0].tolist() == [20, 30]


def test_single_stratum_takes_everything():
    tree = single_stratum_tree(np.arange(40))
    assert neyman_allocate(tree, 25).n_h.tolist() == [25]
    plan = neyman_allocate(tree, 100)
    assert plan.n_h.tolist() == [40] and plan.clamped_to_N


def test_zero_proxies_fall_back_to_proportional():
    n_h, _ = allocate_counts([300, 100], [0.0, 0.0], 40, 2)
    assert n_h.tolist() == [30, 10]


def test_degenerate_stratum_is_censused():
    n_h, _ = allocate_counts([1, 500], [0.25, 0.01], 50, 2)
    assert n_h[0] == 1


@given(strata)
@settings(max_examples=400, deadline=None)
def test_allocation_clamps_and_totals(case):
    counts, s2, n, thr = case
    n_h, n_eff = allocate_counts(counts, s2, n, thr)
    counts = np.asarray(counts)
    assert n_eff == min(n, counts.sum())
    assert np.all(n_h <= counts)
    assert np.all(n_h >= np.minimum(thr, counts))
    floors = np.minimum(thr, counts).sum()
    if floors <= n_eff:
        assert int(n_h.sum()) == n_eff


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@given(strata)
@settings(max_examples=400, deadline=None)
def test_backends_agree(case):
    counts, s2, n, thr = case
    sds = np.sqrt(s2)
    a = kernels.get_backend("python").neyman_counts(counts, sds, n, thr)
    b = kernels.get_backend("cython").neyman_counts(counts, sds, n, thr)
    assert a[0].tolist() == b[0].tolist() and a[1] == b[1]


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_candidate_objectives_agree(rng):
    scores = np.sort(rng.random(500))
    prefix = np.concatenate([[0.0], np.cumsum(scores)])
    cuts = np.arange(101, 400, 7)
    args = (prefix, 100, 400, cuts, np.array([100, 100]), np.array([0.02, 0.2]), 60, 2)
    a = kernels.get_backend("python").candidate_objectives(*args)
    b = kernels.get_backend("cython").candidate_objectives(*args)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_objective_single_stratum_anchor():
    # p(1-p)/n at p = 0.1, n = 10000
    assert candidate_split_objective([50000], [0.09], 10000) == pytest.approx(9.0e-6, rel=1e-12)


def test_objective_pure_strata():
    assert candidate_split_objective([50, 50], [0.0, 0.0], 10) == 0.0


def test_objective_hand_case():
    # allocation (75, 25): 0.25*0.09/75 + 0.25*0.01/25
    got = candidate_split_objective([1000, 1000], [0.09, 0.01], 100, 2)
    assert got == pytest.approx(0.25 * 0.09 / 75 + 0.25 * 0.01 / 25, rel=1e-12)
    assert got == pytest.approx(4.0e-4, rel=1e-12)


def test_objective_rejects_empty_stratum():
    assert math.isinf(candidate_split_objective([10, 0], [0.1, 0.1], 5))


def test_neyman_beats_proportional_unrounded(rng):
    for _ in range(1000):
        L = rng.integers(1, 17)
        W = rng.dirichlet(np.ones(L))
        S = np.sqrt(rng.uniform(0, 0.25, L))
        n = 100.0
        neyman = (W * S).sum() ** 2 / n
        proportional = (W * S**2).sum() / n
        assert neyman <= proportional * (1 + 1e-12)
