"""Entropy-family scores and MDL-based supervised discretization.

All scores work on integer code arrays (discretized feature bins, symbolic
vocabulary codes, or class codes) and use base-2 logs with the 0*log(0)=0
convention. Entropy sums run over sorted nonzero counts so that a given
multiset of counts always produces the identical float, which keeps
symmetric_uncertainty exactly symmetric in its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .schema import BINARY, SYMBOLIC

__all__ = [
    "DiscretizedColumn",
    "DiscretizedTable",
    "entropy",
    "entropy_from_counts",
    "info_gain",
    "gain_ratio",
    "symmetric_uncertainty",
    "discretize_mdl",
    "discretize_dataset",
]


@dataclass(frozen=True)
class DiscretizedColumn:
    """A feature reduced to integer bin codes.

    cut_points is empty for symbolic/binary passthrough columns; for MDL
    columns it holds ascending thresholds strictly between observed values,
    and codes[i] counts the cut points below values[i].
    """

    feature_id: int
    cut_points: tuple
    codes: np.ndarray
    n_bins: int

    def __post_init__(self):
        self.codes.setflags(write=False)


@dataclass(frozen=True)
class DiscretizedTable:
    columns: tuple
    labels: np.ndarray

    def column(self, feature_id: int) -> DiscretizedColumn:
        col = self.columns[feature_id - 1]
        if col.feature_id != feature_id:
            raise ValueError("table columns out of order")
        return col


def entropy_from_counts(counts) -> float:
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    if c.size <= 1:
        return 0.0
    c = np.sort(c)
    p = c / c.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(codes) -> float:
    """Shannon entropy in bits of an integer code array."""
    codes = np.asarray(codes)
    if codes.size == 0:
        return 0.0
    return entropy_from_counts(np.bincount(codes.astype(np.intp)))


def _codes_of(x) -> np.ndarray:
    if isinstance(x, DiscretizedColumn):
        return x.codes.astype(np.intp)
    return np.asarray(x).astype(np.intp)


def _joint_entropy(a: np.ndarray, b: np.ndarray) -> float:
    nb = int(b.max()) + 1 if b.size else 1
    return entropy_from_counts(np.bincount(a * nb + b))


def info_gain(col, labels) -> float:
    """Mutual information I(col; labels) in bits, never negative."""
    a = _codes_of(col)
    y = _codes_of(labels)
    if a.size == 0:
        return 0.0
    ig = entropy(a) + entropy(y) - _joint_entropy(a, y)
    return max(0.0, ig)


def gain_ratio(col, labels) -> float:
    """info_gain normalized by the split information; 0 for a single bin."""
    a = _codes_of(col)
    if a.size == 0:
        return 0.0
    counts = np.bincount(a)
    if np.count_nonzero(counts) <= 1:
        return 0.0
    return info_gain(a, labels) / entropy_from_counts(counts)


def symmetric_uncertainty(a, b) -> float:
    """SU(a, b) = 2 I(a;b) / (H(a) + H(b)), in [0, 1]; 0 if both constant."""
    ca = _codes_of(a)
    cb = _codes_of(b)
    if ca.size == 0:
        return 0.0
    ha = entropy(ca)
    hb = entropy(cb)
    denom = ha + hb
    if denom == 0.0:
        return 0.0
    mi = max(0.0, ha + hb - _joint_entropy(ca, cb))
    return min(1.0, 2.0 * mi / denom)


# -- MDL discretization ------------------------------------------------------


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    # row-wise version of entropy_from_counts, same sorted summation order
    c = np.sort(counts.astype(np.float64), axis=1)
    tot = c.sum(axis=1, keepdims=True)
    tot = np.where(tot == 0, 1.0, tot)
    p = c / tot
    terms = np.where(c > 0, p * np.log2(np.where(c > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def discretize_mdl(values, labels, feature_id: int = 0) -> DiscretizedColumn:
    """Recursive entropy-minimizing binning with the MDL stopping rule.

    Cut candidates sit between adjacent runs of equal values whose class
    composition differs; the chosen cut is the midpoint, ties resolved
    toward the lower midpoint. A split is kept only when its info gain
    clears the MDL coding cost of announcing it.
    """
    values = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels).astype(np.intp)
    n = values.size
    if n == 0:
        return DiscretizedColumn(feature_id, (), np.zeros(0, dtype=np.int32), 1)
    order = np.argsort(values, kind="stable")
    v = values[order]
    ys = y[order]
    ny = int(y.max()) + 1

    onehot = np.zeros((n, ny), dtype=np.int64)
    onehot[np.arange(n), ys] = 1
    prefix = np.zeros((n + 1, ny), dtype=np.int64)
    np.cumsum(onehot, axis=0, out=prefix[1:])

    # runs of equal values; candidate boundaries must separate runs whose
    # class makeup is not the same pure class on both sides
    change = np.flatnonzero(v[1:] != v[:-1]) + 1
    if change.size == 0:
        return DiscretizedColumn(feature_id, (), np.zeros(n, dtype=np.int32), 1)
    run_start = np.concatenate(([0], change))
    n_runs = run_start.size
    run_id = np.zeros(n, dtype=np.intp)
    run_id[change] = 1
    run_id = np.cumsum(run_id)
    run_counts = np.zeros((n_runs, ny), dtype=np.int64)
    np.add.at(run_counts, run_id, onehot)
    nonzero = (run_counts > 0).sum(axis=1)
    pure_class = np.where(nonzero == 1, run_counts.argmax(axis=1), -1)
    same_pure = (pure_class[:-1] >= 0) & (pure_class[:-1] == pure_class[1:])
    cand = change[~same_pure]
    mid = (v[cand - 1] + v[cand]) / 2.0
    ok = (mid > v[cand - 1]) & (mid < v[cand])
    cand = cand[ok]
    if cand.size == 0:
        return DiscretizedColumn(feature_id, (), np.zeros(n, dtype=np.int32), 1)

    cuts = []
    stack = [(0, n)]
    while stack:
        lo, hi = stack.pop()
        seg = prefix[hi] - prefix[lo]
        n_seg = hi - lo
        k = int(np.count_nonzero(seg))
        if k <= 1 or n_seg < 2:
            continue
        a = int(np.searchsorted(cand, lo, side="right"))
        b = int(np.searchsorted(cand, hi, side="left"))
        pos = cand[a:b]
        if pos.size == 0:
            continue
        left = prefix[pos] - prefix[lo]
        right = seg - left
        nl = (pos - lo).astype(np.float64)
        nr = (hi - pos).astype(np.float64)
        el = _entropy_rows(left)
        er = _entropy_rows(right)
        h_seg = entropy_from_counts(seg)
        ig = h_seg - (nl * el + nr * er) / n_seg
        best = int(np.argmax(ig))
        k1 = int(np.count_nonzero(left[best]))
        k2 = int(np.count_nonzero(right[best]))
        delta = np.log2(3.0 ** k - 2.0) - (k * h_seg - k1 * el[best] - k2 * er[best])
        threshold = (np.log2(n_seg - 1.0) + delta) / n_seg
        if ig[best] > threshold:
            i = int(pos[best])
            cuts.append((v[i - 1] + v[i]) / 2.0)
            stack.append((lo, i))
            stack.append((i, hi))

    cuts.sort()
    cut_arr = np.asarray(cuts, dtype=np.float64)
    codes = np.searchsorted(cut_arr, values, side="right").astype(np.int32)
    return DiscretizedColumn(feature_id, tuple(cuts), codes, len(cuts) + 1)


def discretize_dataset(d: Dataset) -> DiscretizedTable:
    """Discretize every feature against the attack class.

    Symbolic and binary columns pass through as categorical codes; continuous
    columns go through discretize_mdl.
    """
    labels = d.classes.astype(np.intp)
    cols = []
    for meta in d.schema.features:
        raw = d.values[:, meta.index - 1]
        if meta.kind == SYMBOLIC:
            codes = raw.astype(np.int32)
            n_bins = max(len(d.sym_vocabs[meta.index - 1]), 1)
            cols.append(DiscretizedColumn(meta.index, (), codes, n_bins))
        elif meta.kind == BINARY:
            codes = raw.astype(np.int32)
            n_bins = int(codes.max()) + 1 if codes.size else 1
            cols.append(DiscretizedColumn(meta.index, (), codes, max(n_bins, 1)))
        else:
            cols.append(discretize_mdl(raw, labels, feature_id=meta.index))
    return DiscretizedTable(columns=tuple(cols), labels=labels)
