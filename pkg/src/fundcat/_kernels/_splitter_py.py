"""Pure-numpy split search, the fallback for the compiled kernel.

Accumulations are sequential (``cumsum``, ``bincount``, explicit loops over
classes) so results match the compiled kernel bit for bit.
"""

from __future__ import annotations

import numpy as np

# Gains closer than this are ties, settled by lowest feature then lowest threshold.
TIE_TOLERANCE = 1e-12


def _impurity(counts: np.ndarray, total, criterion: int):
    """Impurity of each row of ``counts`` (shape (..., C)) given row totals."""
    s = np.zeros(np.shape(total))
    if criterion == 0:
        for c in range(counts.shape[-1]):
            p = counts[..., c] / total
            s = s + p * p
        return 1.0 - s
    for c in range(counts.shape[-1]):
        p = counts[..., c] / total
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(p > 0.0, p * np.log2(p), 0.0)
        s = s - term
    return s


def node_impurity(counts, criterion: int) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = np.cumsum(counts)[-1]
    return float(_impurity(counts, total, criterion))


def best_split(Xt, rows, feature_order, max_features, y, w, n_classes, criterion):
    """Search the node's rows for the best (feature, threshold).

    Returns ``(feature, threshold, gain, n_evaluated)``; ``feature`` is -1
    when every inspected feature is constant on the node.
    """
    m = rows.shape[0]
    if m < 2:
        return -1, 0.0, 0.0, 0
    yr = y[rows]
    wr = w[rows]
    total = np.bincount(yr, weights=wr, minlength=n_classes).astype(np.float64)
    W = np.cumsum(wr)[-1]
    parent = _impurity(total, W, criterion)
    onehot_pos = np.arange(m)

    best_f, best_gain, best_thr = -1, -np.inf, 0.0
    evaluated = 0
    for f in feature_order:
        if evaluated >= max_features:
            break
        v = Xt[f, rows]
        if v.min() == v.max():
            continue
        evaluated += 1
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = yr[order]
        ws = wr[order]
        table = np.zeros((m, n_classes))
        table[onehot_pos, ys] = ws
        left = np.cumsum(table, axis=0)
        wl = np.cumsum(ws)
        b = np.flatnonzero(vs[:-1] < vs[1:])
        WL = wl[b]
        WR = W - WL
        ok = (WL > 0.0) & (WR > 0.0)
        b, WL, WR = b[ok], WL[ok], WR[ok]
        if b.size == 0:
            continue
        L = left[b]
        R = total - L
        gains = parent - (WL / W) * _impurity(L, WL, criterion) - (WR / W) * _impurity(R, WR, criterion)
        # Lowest threshold whose gain ties the maximum within TIE_TOLERANCE.
        j = int(np.flatnonzero(gains >= gains.max() - TIE_TOLERANCE)[0])
        g = float(gains[j])
        if best_f < 0 or g > best_gain + TIE_TOLERANCE or (g >= best_gain - TIE_TOLERANCE and f < best_f):
            lo, hi = vs[b[j]], vs[b[j] + 1]
            thr = (lo + hi) / 2.0
            if thr >= hi:
                thr = lo
            best_f, best_gain, best_thr = int(f), g, float(thr)
    if best_f < 0:
        return -1, 0.0, 0.0, evaluated
    return best_f, best_thr, best_gain, evaluated
