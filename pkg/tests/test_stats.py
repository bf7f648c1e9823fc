"""Entropy family and MDL discretization against independent references."""

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kddfeatsel.schema import BINARY, CONTINUOUS, SYMBOLIC, AttackClass
from kddfeatsel.stats import (
    DiscretizedTable,
    discretize_dataset,
    discretize_mdl,
    entropy,
    entropy_from_counts,
    gain_ratio,
    info_gain,
    symmetric_uncertainty,
)

from conftest import (
    make_dataset,
    ref_entropy,
    ref_gain_ratio,
    ref_mutual_information,
    ref_su,
)

N = AttackClass.NORMAL
D = AttackClass.DOS


class TestEntropyFamily:
    def test_entropy_hand_values(self):
        assert entropy_from_counts([1, 1]) == pytest.approx(1.0)
        assert entropy_from_counts([2, 2, 4]) == pytest.approx(1.5)
        assert entropy_from_counts([0, 8]) == 0.0
        assert entropy([]) == 0.0
        assert entropy([3, 3, 3]) == 0.0

    def test_info_gain_perfect_predictor(self):
        y = [0, 0, 1, 1, 2, 2]
        assert info_gain(y, y) == pytest.approx(math.log2(3))

    def test_info_gain_independent_is_zero(self):
        assert info_gain([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0)

    def test_gain_ratio_single_bin_is_zero(self):
        assert gain_ratio([2, 2, 2], [0, 1, 0]) == 0.0

    def test_su_self_is_one(self):
        a = [0, 1, 2, 0, 1]
        assert symmetric_uncertainty(a, a) == 1.0

    def test_su_constant_pair_is_zero(self):
        assert symmetric_uncertainty([1, 1], [0, 0]) == 0.0

    def test_oracle_agreement_on_random_tables(self):
        rng = np.random.default_rng(414243)
        for _ in range(80):
            n = int(rng.integers(2, 80))
            a = rng.integers(0, int(rng.integers(2, 6)), n)
            b = rng.integers(0, int(rng.integers(2, 6)), n)
            assert entropy(a) == pytest.approx(ref_entropy(a.tolist()), abs=1e-9)
            assert info_gain(a, b) == pytest.approx(
                max(0.0, ref_mutual_information(a.tolist(), b.tolist())), abs=1e-9
            )
            assert gain_ratio(a, b) == pytest.approx(
                ref_gain_ratio(a.tolist(), b.tolist()), abs=1e-9
            )
            assert symmetric_uncertainty(a, b) == pytest.approx(
                ref_su(a.tolist(), b.tolist()), abs=1e-9
            )

    @given(
        st.lists(st.integers(0, 4), min_size=1, max_size=60),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_su_symmetry_and_range(self, a, seed):
        b = np.random.default_rng(seed).integers(0, 5, len(a))
        a = np.asarray(a)
        left = symmetric_uncertainty(a, b)
        right = symmetric_uncertainty(b, a)
        assert left == right  # sorted-count summation makes this exact
        assert 0.0 <= left <= 1.0

    @given(
        st.lists(st.integers(0, 3), min_size=1, max_size=60),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_info_gain_nonnegative_and_bounded(self, a, seed):
        b = np.random.default_rng(seed).integers(0, 4, len(a))
        a = np.asarray(a)
        ig = info_gain(a, b)
        assert ig >= 0.0
        assert ig <= min(entropy(a), entropy(b)) + 1e-12


# -- independent recursive reference for the MDL binning ----------------------


def _h(counter):
    tot = sum(counter.values())
    return -sum((c / tot) * math.log2(c / tot) for c in sorted(counter.values()) if c)


def ref_mdl_cut_points(values, labels):
    pairs = sorted(zip(values, labels), key=lambda p: p[0])
    runs = []
    for v, y in pairs:
        if runs and runs[-1][0] == v:
            runs[-1][1][y] += 1
        else:
            runs.append((v, Counter({y: 1})))
    starts, pos = [], 0
    for _, c in runs:
        starts.append(pos)
        pos += sum(c.values())

    def pure(c):
        live = [k for k, cnt in c.items() if cnt]
        return live[0] if len(live) == 1 else None

    cands = []
    for j in range(1, len(runs)):
        lo_v, hi_v = runs[j - 1][0], runs[j][0]
        p1, p2 = pure(runs[j - 1][1]), pure(runs[j][1])
        if p1 is not None and p1 == p2:
            continue
        mid = (lo_v + hi_v) / 2.0
        if not (lo_v < mid < hi_v):
            continue
        cands.append((starts[j], mid))

    ys = [y for _, y in pairs]
    cuts = []

    def segment(lo, hi):
        seg = Counter(ys[lo:hi])
        k = len([c for c in seg.values() if c])
        n_seg = hi - lo
        if k <= 1 or n_seg < 2:
            return
        local = [(p, m) for p, m in cands if lo < p < hi]
        best = None
        for p, m in local:
            left = Counter(ys[lo:p])
            right = seg - left
            ig = _h(seg) - ((p - lo) * _h(left) + (hi - p) * _h(right)) / n_seg
            if best is None or ig > best[0]:
                best = (ig, p, m, left, right)
        if best is None:
            return
        ig, p, m, left, right = best
        k1, k2 = len(left), len(right)
        delta = math.log2(3.0**k - 2.0) - (k * _h(seg) - k1 * _h(left) - k2 * _h(right))
        if ig > (math.log2(n_seg - 1.0) + delta) / n_seg:
            cuts.append(m)
            segment(lo, p)
            segment(p, hi)

    segment(0, len(ys))
    return sorted(cuts)


class TestMdlDiscretization:
    def test_clean_boundary_accepted(self):
        col = discretize_mdl([1, 1, 1, 2, 2, 2], [0, 0, 0, 1, 1, 1])
        assert col.cut_points == (1.5,)
        assert col.n_bins == 2
        assert col.codes.tolist() == [0, 0, 0, 1, 1, 1]

    def test_uniform_labels_yield_no_cuts(self):
        col = discretize_mdl([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])
        assert col.cut_points == ()
        assert col.n_bins == 1
        assert col.codes.tolist() == [0] * 5

    def test_constant_values_yield_no_cuts(self):
        col = discretize_mdl([7, 7, 7, 7], [0, 1, 0, 1])
        assert col.cut_points == ()

    def test_coding_cost_rejects_thin_alternation(self):
        # the best single cut gains 0.311 bits but costs 0.828 to announce
        col = discretize_mdl([1, 2, 3, 4], [0, 1, 0, 1])
        assert col.cut_points == ()

    def test_same_class_neighbors_produce_one_candidate(self):
        col = discretize_mdl([1, 2, 3, 4, 5, 6], [0, 0, 0, 1, 1, 1])
        assert col.cut_points == (3.5,)

    def test_recursion_finds_both_staircase_cuts(self):
        col = discretize_mdl([1, 1, 2, 2, 3, 3], [0, 0, 1, 1, 2, 2])
        assert col.cut_points == (1.5, 2.5)
        assert col.n_bins == 3
        assert col.codes.tolist() == [0, 0, 1, 1, 2, 2]

    def test_degenerate_midpoint_dropped(self):
        v = [1.0, np.nextafter(1.0, 2.0)]
        col = discretize_mdl(v, [0, 1])
        assert col.cut_points == ()

    def test_input_order_irrelevant(self):
        rng = np.random.default_rng(11)
        v = np.repeat([1.0, 2.0, 3.0], 8)
        y = np.repeat([0, 1, 0], 8)
        perm = rng.permutation(v.size)
        a = discretize_mdl(v, y)
        b = discretize_mdl(v[perm], y[perm])
        assert a.cut_points == b.cut_points
        assert a.codes[perm].tolist() == b.codes.tolist()

    def test_matches_recursive_reference_on_random_columns(self):
        rng = np.random.default_rng(987123)
        for trial in range(150):
            n = int(rng.integers(5, 60))
            if trial % 2:
                v = rng.integers(0, 6, n).astype(float)
            else:
                v = np.round(rng.normal(size=n), 2)
            y = rng.integers(0, 3, n)
            col = discretize_mdl(v, y)
            expected = ref_mdl_cut_points(v.tolist(), y.tolist())
            assert list(col.cut_points) == pytest.approx(expected, abs=1e-12), (
                f"trial {trial}"
            )
            codes = np.searchsorted(np.asarray(col.cut_points), v, side="right")
            assert col.codes.tolist() == codes.tolist()


class TestDiscretizeDataset:
    def _dataset(self):
        kinds = (CONTINUOUS, SYMBOLIC, BINARY)
        cont = [1, 1, 1, 2, 2, 2]
        sym = ["b", "a", "b", "c", "a", "c"]
        binv = [0, 1, 0, 1, 1, 0]
        classes = [N, N, N, D, D, D]
        return make_dataset(kinds, (cont, sym, binv), classes)

    def test_symbolic_and_binary_pass_through(self):
        d = self._dataset()
        t = discretize_dataset(d)
        sym = t.column(2)
        assert sym.cut_points == ()
        assert sym.n_bins == 3  # vocabulary size
        assert sym.codes.tolist() == d.feature_values(2).astype(int).tolist()
        binc = t.column(3)
        assert binc.n_bins == 2
        assert binc.codes.tolist() == [0, 1, 0, 1, 1, 0]

    def test_continuous_column_uses_mdl(self):
        t = discretize_dataset(self._dataset())
        assert t.column(1).cut_points == (1.5,)
        assert t.labels.tolist() == [0, 0, 0, 1, 1, 1]

    def test_column_lookup_validates_order(self):
        t = discretize_dataset(self._dataset())
        shuffled = DiscretizedTable(columns=t.columns[::-1], labels=t.labels)
        with pytest.raises(ValueError):
            shuffled.column(1)
