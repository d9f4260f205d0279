# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled node split search.

Mirrors ``_splitter_py.best_split`` operation for operation so that both
backends produce identical trees given identical inputs.
"""

from libc.math cimport log2, INFINITY
from libc.stdlib cimport malloc, free, qsort
from libc.string cimport memset


# Gains closer than this are ties, settled by lowest feature then lowest threshold.
cdef double TIE_TOLERANCE = 1e-12


cdef struct Entry:
    double value
    Py_ssize_t pos


cdef int _cmp_entry(const void* a, const void* b) noexcept nogil:
    cdef const Entry* ea = <const Entry*> a
    cdef const Entry* eb = <const Entry*> b
    if ea.value < eb.value:
        return -1
    if ea.value > eb.value:
        return 1
    if ea.pos < eb.pos:
        return -1
    if ea.pos > eb.pos:
        return 1
    return 0


cdef inline double _impurity(const double* counts, double total, Py_ssize_t n_classes,
                             int criterion) noexcept nogil:
    cdef Py_ssize_t c
    cdef double p, s = 0.0
    if criterion == 0:
        for c in range(n_classes):
            p = counts[c] / total
            s += p * p
        return 1.0 - s
    for c in range(n_classes):
        p = counts[c] / total
        if p > 0.0:
            s -= p * log2(p)
    return s


def node_impurity(const double[::1] counts, int criterion):
    cdef double total = 0.0
    cdef Py_ssize_t c
    for c in range(counts.shape[0]):
        total += counts[c]
    return _impurity(&counts[0], total, counts.shape[0], criterion)


def best_split(const double[:, ::1] Xt, const long long[::1] rows,
               const long long[::1] feature_order, Py_ssize_t max_features,
               const long long[::1] y, const double[::1] w,
               Py_ssize_t n_classes, int criterion):
    """Search the node's rows for the best (feature, threshold).

    Returns ``(feature, threshold, gain, n_evaluated)``; ``feature`` is -1
    when every inspected feature is constant on the node.
    """
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t n_feat = feature_order.shape[0]
    cdef Py_ssize_t i, k, c, f, r
    cdef Py_ssize_t evaluated = 0
    cdef long long best_f = -1
    cdef double best_gain = -INFINITY, best_thr = 0.0
    cdef double W = 0.0, WL, WR, parent, il, ir, gain, a, b, thr, vmin, vmax, v
    cdef double feat_gain, feat_thr
    cdef bint have_feat
    cdef Py_ssize_t n_cand

    if m < 2:
        return -1, 0.0, 0.0, 0

    cdef Entry* entries = <Entry*> malloc(m * sizeof(Entry))
    cdef double* total = <double*> malloc(n_classes * sizeof(double))
    cdef double* left = <double*> malloc(n_classes * sizeof(double))
    cdef double* right = <double*> malloc(n_classes * sizeof(double))
    cdef double* cand_gain = <double*> malloc(m * sizeof(double))
    cdef double* cand_thr = <double*> malloc(m * sizeof(double))
    if (entries == NULL or total == NULL or left == NULL or right == NULL
            or cand_gain == NULL or cand_thr == NULL):
        free(entries); free(total); free(left); free(right); free(cand_gain); free(cand_thr)
        raise MemoryError()

    try:
        with nogil:
            memset(total, 0, n_classes * sizeof(double))
            for i in range(m):
                r = rows[i]
                total[y[r]] += w[r]
            # Sequential prefix sum, matching numpy.cumsum in the fallback.
            for i in range(m):
                W += w[rows[i]]
            parent = _impurity(total, W, n_classes, criterion)

            for k in range(n_feat):
                if evaluated >= max_features:
                    break
                f = feature_order[k]
                vmin = Xt[f, rows[0]]
                vmax = vmin
                for i in range(m):
                    v = Xt[f, rows[i]]
                    entries[i].value = v
                    entries[i].pos = i
                    if v < vmin:
                        vmin = v
                    elif v > vmax:
                        vmax = v
                if vmin == vmax:
                    continue
                evaluated += 1
                qsort(entries, m, sizeof(Entry), _cmp_entry)

                memset(left, 0, n_classes * sizeof(double))
                WL = 0.0
                have_feat = False
                feat_gain = 0.0
                feat_thr = 0.0
                n_cand = 0
                for i in range(m - 1):
                    r = rows[entries[i].pos]
                    left[y[r]] += w[r]
                    WL += w[r]
                    a = entries[i].value
                    b = entries[i + 1].value
                    if not a < b:
                        continue
                    WR = W - WL
                    if WL <= 0.0 or WR <= 0.0:
                        continue
                    for c in range(n_classes):
                        right[c] = total[c] - left[c]
                    il = _impurity(left, WL, n_classes, criterion)
                    ir = _impurity(right, WR, n_classes, criterion)
                    gain = parent - (WL / W) * il - (WR / W) * ir
                    thr = (a + b) / 2.0
                    if thr >= b:
                        thr = a
                    cand_gain[n_cand] = gain
                    cand_thr[n_cand] = thr
                    n_cand += 1
                    if not have_feat or gain > feat_gain:
                        have_feat = True
                        feat_gain = gain
                if not have_feat:
                    continue
                # Lowest threshold whose gain ties the maximum within TIE_TOLERANCE.
                for i in range(n_cand):
                    if cand_gain[i] >= feat_gain - TIE_TOLERANCE:
                        feat_gain = cand_gain[i]
                        feat_thr = cand_thr[i]
                        break
                if (best_f < 0 or feat_gain > best_gain + TIE_TOLERANCE
                        or (feat_gain >= best_gain - TIE_TOLERANCE and f < best_f)):
                    best_gain = feat_gain
                    best_f = f
                    best_thr = feat_thr
    finally:
        free(entries); free(total); free(left); free(right); free(cand_gain); free(cand_thr)

    if best_f < 0:
        return -1, 0.0, 0.0, evaluated
    return int(best_f), best_thr, best_gain, evaluated
