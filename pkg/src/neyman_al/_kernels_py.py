"""Pure-Python kernels. Reference behaviour for the compiled ``_kernels`` module."""
import math

import numpy as np


def neyman_counts(counts, sds, n, n_threshold):
    """Integer Neyman allocation with floor/cap clamping.

    Returns ``(n_h, n_effective)`` where ``n_effective = min(n, sum(counts))``.
    """
    L = len(counts)
    counts = [int(c) for c in counts]
    total = sum(counts)
    n = min(int(n), total)

    weights = [counts[h] * float(sds[h]) for h in range(L)]
    if sum(weights) <= 0.0:
        weights = [float(c) for c in counts]

    fixed = [-1] * L
    for h in range(L):
        if counts[h] == 0:
            fixed[h] = 0

    shares = [0.0] * L
    remaining = n
    while True:
        free = [h for h in range(L) if fixed[h] < 0]
        if not free:
            break
        remaining = n - sum(fixed[h] for h in range(L) if fixed[h] >= 0)
        wsum = sum(weights[h] for h in free)
        if wsum > 0.0:
            for h in free:
                shares[h] = remaining * weights[h] / wsum
        else:
            csum = sum(counts[h] for h in free)
            for h in free:
                shares[h] = remaining * counts[h] / csum
        # Net clamping excess decides the direction the multiplier must move;
        # only violators on that side are guaranteed to stay clamped.
        lo = {h: min(n_threshold, counts[h]) for h in free}
        over = [h for h in free if shares[h] > counts[h]]
        under = [h for h in free if shares[h] < lo[h]]
        if not over and not under:
            break
        excess = sum(lo[h] - shares[h] for h in under) - sum(shares[h] - counts[h] for h in over)
        if excess > 0:
            for h in under:
                fixed[h] = lo[h]
        elif excess < 0:
            for h in over:
                fixed[h] = counts[h]
        else:
            for h in under:
                fixed[h] = lo[h]
            for h in over:
                fixed[h] = counts[h]

    out = [fixed[h] if fixed[h] >= 0 else 0 for h in range(L)]
    free = [h for h in range(L) if fixed[h] < 0]
    if free:
        base = {h: int(math.floor(shares[h])) for h in free}
        extra = remaining - sum(base.values())
        extra = max(0, min(extra, len(free)))
        order = sorted(free, key=lambda h: (-(shares[h] - base[h]), h))
        for h in order[:extra]:
            base[h] += 1
        for h in free:
            out[h] = base[h]
    return np.asarray(out, dtype=np.int64), n


def objective(counts, s2, n_h):
    """Sum of W_h^2 s_h^2 / n_h; inf when a stratum is empty or unsampled."""
    N = float(sum(counts))
    total = 0.0
    for c, v, k in zip(counts, s2, n_h):
        if c <= 0:
            return math.inf
        w = c / N
        if v == 0.0:
            continue
        if k <= 0:
            return math.inf
        total += w * w * v / k
    return total


def candidate_objectives(prefix, lo, hi, cuts, other_counts, other_s2, n, n_threshold):
    """Global objective for each cut position splitting the node ``[lo, hi)``.

    ``prefix`` is the cumulative sum of the sorted collapsed scores (length N+1).
    The candidate stratification is the other leaves plus the two children.
    """
    other_counts = [int(c) for c in other_counts]
    other_s2 = [float(v) for v in other_s2]
    out = np.empty(len(cuts), dtype=np.float64)
    for j, c in enumerate(cuts):
        c = int(c)
        nl = c - lo
        nr = hi - c
        if nl <= 0 or nr <= 0:
            out[j] = math.inf
            continue
        pl = (prefix[c] - prefix[lo]) / nl
        pr = (prefix[hi] - prefix[c]) / nr
        s2l = min(max(pl * (1.0 - pl), 0.0), 0.25)
        s2r = min(max(pr * (1.0 - pr), 0.0), 0.25)
        counts = other_counts + [nl, nr]
        s2 = other_s2 + [s2l, s2r]
        sds = [math.sqrt(v) for v in s2]
        n_h, _ = neyman_counts(counts, sds, n, n_threshold)
        out[j] = objective(counts, s2, n_h)
    return out
