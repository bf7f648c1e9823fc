"""Shared fixtures and independent reference implementations.

The ref_* functions recompute quantities from first principles with Counter
and Fraction arithmetic so the vectorized implementations are checked
against genuinely different code paths, not against themselves.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from kddfeatsel.dataset import Dataset, deduplicate, parse_kdd
from kddfeatsel.schema import AttackClass, FeatureMeta, Schema

PROTOS = ("tcp", "udp", "icmp")
SERVICES = ("http", "smtp", "ftp", "telnet", "private")
FLAGS = ("SF", "REJ", "S0")

CLASS_TOKENS = {
    AttackClass.NORMAL: "normal",
    AttackClass.DOS: "neptune",
    AttackClass.PROBE: "ipsweep",
    AttackClass.R2L: "guess_passwd",
    AttackClass.U2R: "rootkit",
}


def kdd_line(overrides=None, label="normal."):
    """One raw data line; overrides maps 1-based feature ids to values."""
    fields = ["0"] * 41
    fields[1], fields[2], fields[3] = "tcp", "http", "SF"
    for idx, val in (overrides or {}).items():
        fields[idx - 1] = str(val)
    return ",".join(fields) + f",{label}"


def synthetic_kdd_lines(seed=20260817):
    """Five-class corpus with planted structure and exact duplicate blocks.

    All numeric fields are written as canonical integers, so two records are
    equal exactly when their raw lines are equal; tests lean on that to
    count expected duplicates straight off the text.
    """
    rng = np.random.default_rng(seed)
    label_pool = {0: ["normal."], 1: ["neptune.", "smurf."],
                  2: ["ipsweep.", "portsweep."], 3: ["guess_passwd."],
                  4: ["buffer_overflow.", "rootkit."]}
    lines = []
    for cls, n in ((0, 60), (1, 60), (2, 40), (3, 25), (4, 12)):
        for _ in range(n):
            over = {
                1: int(rng.integers(0, 3)),
                2: PROTOS[int(rng.integers(0, 3))],
                3: SERVICES[(cls + int(rng.integers(0, 2))) % 5],
                4: FLAGS[int(rng.integers(0, 3))],
                5: 100 * cls + int(rng.integers(0, 40)),
                6: int(rng.integers(0, 50)),
                10: int(rng.integers(0, 2)),
                23: 250 - 50 * cls + int(rng.integers(0, 20)),
                32: int(rng.integers(0, 255)),
            }
            labels = label_pool[cls]
            lines.append(kdd_line(over, labels[int(rng.integers(0, len(labels)))]))
    lines += lines[60:90]      # duplicate a DOS block
    lines += lines[:10]        # and some NORMAL rows
    rng.shuffle(lines)
    return lines


@pytest.fixture(scope="session")
def small_kdd_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.csv"
    path.write_text("\n".join(synthetic_kdd_lines()) + "\n")
    return str(path)


@pytest.fixture(scope="session")
def small_dataset(small_kdd_path):
    d, _ = deduplicate(parse_kdd(small_kdd_path))
    return d


def make_dataset(kinds, columns, classes, source="test"):
    """Tiny dataset over a custom schema: kinds per feature, columns of
    per-row values, classes as AttackClass members."""
    metas = tuple(FeatureMeta(index=i, name=f"f{i}", kind=k, group="test")
                  for i, k in enumerate(kinds, start=1))
    label_map = {tok: cls for cls, tok in CLASS_TOKENS.items()}
    schema = Schema(features=metas, label_map=label_map)
    rows = [(list(vals), CLASS_TOKENS[AttackClass(c)])
            for vals, c in zip(zip(*columns), classes)]
    return Dataset.from_records(schema, rows, source=source)


# -- reference implementations --------------------------------------------------


def ref_entropy(values) -> float:
    c = Counter(values)
    n = sum(c.values())
    return -sum((v / n) * math.log2(v / n) for v in c.values() if v)


def ref_mutual_information(a, b) -> float:
    n = len(a)
    ca, cb, cab = Counter(a), Counter(b), Counter(zip(a, b))
    mi = 0.0
    for (x, y), nxy in cab.items():
        mi += (nxy / n) * math.log2(n * nxy / (ca[x] * cb[y]))
    return mi


def ref_gain_ratio(col, labels) -> float:
    h = ref_entropy(col)
    if h <= 0.0:
        return 0.0
    return ref_mutual_information(col, labels) / h


def ref_su(a, b) -> float:
    denom = ref_entropy(a) + ref_entropy(b)
    if denom == 0.0:
        return 0.0
    return 2.0 * ref_mutual_information(a, b) / denom


def ref_cfs_merit(subset, su_fc, su_ff) -> float:
    """su_fc: {feature: su vs class}; su_ff: {frozenset pair: su}."""
    ids = sorted(subset)
    k = len(ids)
    rcf = sum(su_fc[f] for f in ids) / k
    if k == 1:
        return rcf
    pairs = list(combinations(ids, 2))
    rff = sum(su_ff[frozenset(p)] for p in pairs) / len(pairs)
    return k * rcf / math.sqrt(k + k * (k - 1) * rff)


def ref_binary_metrics(tp, fp, fn, tn) -> dict:
    def frac(num, den):
        return float(Fraction(num, den)) if den else 0.0

    mcc_den = math.sqrt(float((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)))
    return {
        "tpr": frac(tp, tp + fn),
        "fpr": frac(fp, fp + tn),
        "specificity": frac(tn, tn + fp),
        "npv": frac(tn, tn + fn),
        "ppv": frac(tp, tp + fp),
        "f_measure": frac(2 * tp, 2 * tp + fp + fn),
        "mcc": (tp * tn - fp * fn) / mcc_den if mcc_den else 0.0,
        "accuracy": frac(tp + tn, tp + fp + fn + tn),
    }


def exhaustive_best_merit(ev, k) -> float:
    """Brute-force maximum subset merit over all non-empty subsets of 1..k."""
    best = 0.0
    for r in range(1, k + 1):
        for subset in combinations(range(1, k + 1), r):
            m = ev.merit(subset)
            if m > best:
                best = m
    return best


# -- planted datasets ------------------------------------------------------------


def planted_search_dataset(seed, n_features=10, n_rows=150):
    """Three strongly class-dependent columns, the rest Gaussian noise."""
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, 3, size=n_rows)
    columns = []
    for j in range(n_features):
        if j < 3:
            col = classes * (j + 2.0) + rng.normal(0.0, 0.5, size=n_rows)
        else:
            col = rng.normal(0.0, 1.0, size=n_rows)
        columns.append(np.round(col, 3))
    return make_dataset(("continuous",) * n_features, columns,
                        [AttackClass(int(c)) for c in classes])


@pytest.fixture
def xor_dataset():
    xs, ys, classes = [], [], []
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            for _ in range(8):
                xs.append(a)
                ys.append(b)
                classes.append(AttackClass.DOS if a != b else AttackClass.NORMAL)
    return make_dataset(("continuous", "continuous"), [xs, ys], classes)


@pytest.fixture
def duplicate_column_dataset():
    """Feature 2 is an exact copy of feature 1; feature 3 is noise."""
    rng = np.random.default_rng(7)
    classes = [AttackClass.NORMAL] * 30 + [AttackClass.DOS] * 30
    base = [10.0 * (c == AttackClass.DOS) + float(rng.integers(0, 3))
            for c in classes]
    noise = [float(rng.integers(0, 4)) for _ in classes]
    return make_dataset(("continuous",) * 3, [base, list(base), noise], classes)


@pytest.fixture
def planted_u2r_dataset():
    """Feature 1 separates normal from attack only. Feature 2 marks U2R rows
    and nothing else. Feature 3 marks U2R rows but also fires on 9 of the 30
    DOS rows, which a floored-variance Gaussian model then mislabels as U2R."""
    classes = ([AttackClass.NORMAL] * 40 + [AttackClass.DOS] * 30
               + [AttackClass.U2R] * 6)
    base = [0.0] * 40 + [1.0] * 36
    planted = [0.0] * 70 + [3.0] * 6
    decoy = [0.0] * 40 + [7.0] * 9 + [0.0] * 21 + [7.0] * 6
    return make_dataset(("continuous",) * 3, [base, planted, decoy], classes)
