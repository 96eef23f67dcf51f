# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef long long _allocate(long long L, const long long* counts, const double* sds,
                         long long n, long long n_threshold,
                         double* weights, double* shares, long long* fixed,
                         long long* out) noexcept nogil:
    cdef long long h, total = 0, remaining, nfree, extra, csum, fl, best, k
    cdef double wsum = 0.0, frac, bestfrac, excess
    cdef long long nviol
    for h in range(L):
        total += counts[h]
    if n > total:
        n = total
    for h in range(L):
        weights[h] = counts[h] * sds[h]
        wsum += weights[h]
    if wsum <= 0.0:
        for h in range(L):
            weights[h] = <double>counts[h]
    for h in range(L):
        fixed[h] = 0 if counts[h] == 0 else -1

    remaining = n
    while True:
        nfree = 0
        remaining = n
        wsum = 0.0
        csum = 0
        for h in range(L):
            if fixed[h] >= 0:
                remaining -= fixed[h]
            else:
                nfree += 1
                wsum += weights[h]
                csum += counts[h]
        if nfree == 0:
            break
        for h in range(L):
            if fixed[h] < 0:
                if wsum > 0.0:
                    shares[h] = remaining * weights[h] / wsum
                else:
                    shares[h] = remaining * (<double>counts[h]) / csum
        # net clamping excess decides which side's violators stay clamped
        excess = 0.0
        nviol = 0
        for h in range(L):
            if fixed[h] < 0:
                fl = n_threshold if n_threshold < counts[h] else counts[h]
                if shares[h] > counts[h]:
                    excess -= shares[h] - counts[h]
                    nviol += 1
                elif shares[h] < fl:
                    excess += fl - shares[h]
                    nviol += 1
        if nviol == 0:
            break
        for h in range(L):
            if fixed[h] < 0:
                fl = n_threshold if n_threshold < counts[h] else counts[h]
                if excess >= 0.0 and shares[h] < fl:
                    fixed[h] = fl
                elif excess <= 0.0 and shares[h] > counts[h]:
                    fixed[h] = counts[h]

    extra = remaining
    nfree = 0
    for h in range(L):
        if fixed[h] >= 0:
            out[h] = fixed[h]
        else:
            out[h] = <long long>floor(shares[h])
            extra -= out[h]
            nfree += 1
    if extra > nfree:
        extra = nfree
    # largest remainder; ties go to the lower index
    for k in range(extra):
        best = -1
        bestfrac = -1.0
        for h in range(L):
            if fixed[h] < 0:
                frac = shares[h] - out[h]
                if frac >= 0.0 and frac > bestfrac:
                    bestfrac = frac
                    best = h
        if best < 0:
            break
        out[best] += 1
        # mark as used for this pass
        shares[best] = <double>out[best]
        fixed[best] = out[best]
    return n


cdef double _objective(long long L, const long long* counts, const double* s2,
                       const long long* n_h) noexcept nogil:
    cdef long long h, N = 0
    cdef double w, total = 0.0
    for h in range(L):
        N += counts[h]
    for h in range(L):
        if counts[h] <= 0:
            return INFINITY
        if s2[h] == 0.0:
            continue
        if n_h[h] <= 0:
            return INFINITY
        w = counts[h] / <double>N
        total += w * w * s2[h] / n_h[h]
    return total


def neyman_counts(counts, sds, long long n, long long n_threshold):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(sds, dtype=np.float64)
    cdef long long L = c.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(L, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(L, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sh = np.zeros(L, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] fx = np.empty(L, dtype=np.int64)
    cdef long long n_eff
    if L == 0:
        return out, 0
    n_eff = _allocate(L, <long long*>c.data, <double*>s.data, n, n_threshold,
                      <double*>w.data, <double*>sh.data, <long long*>fx.data,
                      <long long*>out.data)
    return out, int(n_eff)


def objective(counts, s2, n_h):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(s2, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.ascontiguousarray(n_h, dtype=np.int64)
    return _objective(c.shape[0], <long long*>c.data, <double*>v.data, <long long*>k.data)


def candidate_objectives(double[::1] prefix, long long lo, long long hi,
                         cuts, other_counts, other_s2,
                         long long n, long long n_threshold):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cut = np.ascontiguousarray(cuts, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] oc = np.ascontiguousarray(other_counts, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] os2 = np.ascontiguousarray(other_s2, dtype=np.float64)
    cdef long long C = cut.shape[0]
    cdef long long Lo = oc.shape[0]
    cdef long long L = Lo + 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(C, dtype=np.float64)
    cdef long long* counts = <long long*>malloc(L * sizeof(long long))
    cdef long long* fixed = <long long*>malloc(L * sizeof(long long))
    cdef long long* n_h = <long long*>malloc(L * sizeof(long long))
    cdef double* s2 = <double*>malloc(L * sizeof(double))
    cdef double* sds = <double*>malloc(L * sizeof(double))
    cdef double* weights = <double*>malloc(L * sizeof(double))
    cdef double* shares = <double*>malloc(L * sizeof(double))
    cdef long long j, h, c, nl, nr
    cdef double pl, pr, v
    if not (counts and fixed and n_h and s2 and sds and weights and shares):
        free(counts); free(fixed); free(n_h); free(s2); free(sds); free(weights); free(shares)
        raise MemoryError()
    try:
        with nogil:
            for h in range(Lo):
                counts[h] = oc[h]
                s2[h] = os2[h]
                sds[h] = sqrt(os2[h])
            for j in range(C):
                c = cut[j]
                nl = c - lo
                nr = hi - c
                if nl <= 0 or nr <= 0:
                    res[j] = INFINITY
                    continue
                pl = (prefix[c] - prefix[lo]) / nl
                pr = (prefix[hi] - prefix[c]) / nr
                v = pl * (1.0 - pl)
                if v < 0.0:
                    v = 0.0
                if v > 0.25:
                    v = 0.25
                s2[Lo] = v
                v = pr * (1.0 - pr)
                if v < 0.0:
                    v = 0.0
                if v > 0.25:
                    v = 0.25
                s2[Lo + 1] = v
                sds[Lo] = sqrt(s2[Lo])
                sds[Lo + 1] = sqrt(s2[Lo + 1])
                counts[Lo] = nl
                counts[Lo + 1] = nr
                _allocate(L, counts, sds, n, n_threshold, weights, shares, fixed, n_h)
                res[j] = _objective(L, counts, s2, n_h)
    finally:
        free(counts); free(fixed); free(n_h); free(s2); free(sds); free(weights); free(shares)
    return res
