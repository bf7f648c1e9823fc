"""Confusion matrices, detection metrics and stratified cross-validation.

Per-class metrics come from one-vs-rest collapses of the multi-class
confusion matrix. Any metric whose denominator is zero is reported as 0.0
and named in the `undefined` list of its row rather than raising.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .classifiers import ModelSpec, train_model
from .dataset import Dataset
from .rng import derive_seed

__all__ = [
    "ConfusionMatrix",
    "ClassMetrics",
    "MetricsReport",
    "CVConfig",
    "CVResult",
    "compute_metrics",
    "fold_assignments",
    "cross_validate",
    "measure_build_seconds",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = records of classes[i] predicted as classes[j]."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (len(self.classes), len(self.classes)):
            raise ValueError("counts must be square over the class list")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "classes", tuple(int(x) for x in self.classes))

    @classmethod
    def from_labels(cls, actual, predicted, classes=None) -> "ConfusionMatrix":
        a = np.asarray(actual, dtype=np.int64)
        p = np.asarray(predicted, dtype=np.int64)
        if a.shape != p.shape:
            raise ValueError("actual and predicted lengths differ")
        if classes is None:
            classes = sorted(set(a.tolist()) | set(p.tolist()))
        classes = tuple(int(c) for c in classes)
        lut = {c: i for i, c in enumerate(classes)}
        try:
            ai = np.asarray([lut[int(x)] for x in a])
            pi = np.asarray([lut[int(x)] for x in p])
        except KeyError as e:
            raise ValueError(f"label {e.args[0]} not in the class list {classes}") from None
        n = len(classes)
        if a.size:
            counts = np.bincount(ai * n + pi, minlength=n * n).reshape(n, n)
        else:
            counts = np.zeros((n, n), dtype=np.int64)
        return cls(classes=classes, counts=counts)

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise ValueError("cannot pool confusion matrices over different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        """Correctly classified share: trace over total (0.0 when empty)."""
        t = self.total
        return float(np.trace(self.counts)) / t if t else 0.0

    def binary(self, c: int) -> tuple:
        """(tp, fp, fn, tn) of class c against the rest."""
        i = self.classes.index(int(c))
        tp = int(self.counts[i, i])
        fn = int(self.counts[i].sum()) - tp
        fp = int(self.counts[:, i].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, fp, fn, tn

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


@dataclass(frozen=True)
class ClassMetrics:
    tpr: float
    fpr: float
    specificity: float
    npv: float
    ppv: float
    f_measure: float
    mcc: float
    accuracy: float
    undefined: tuple = ()

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("tpr", "fpr", "specificity", "npv", "ppv", "f_measure", "mcc", "accuracy")}
        out["undefined"] = list(self.undefined)
        return out


def _binary_metrics(tp: int, fp: int, fn: int, tn: int) -> ClassMetrics:
    undefined = []

    def ratio(name, num, den):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    tpr = ratio("tpr", tp, tp + fn)
    fpr = ratio("fpr", fp, fp + tn)
    if fp + tn:
        # complement of FPR, never recomputed as tn/(tn+fp): keeps the
        # specificity + fpr == 1 identity exact in floating point
        specificity = 1.0 - fpr
    else:
        undefined.append("specificity")
        specificity = 0.0
    npv = ratio("npv", tn, tn + fn)
    ppv = ratio("ppv", tp, tp + fp)
    if 2 * tp + fp + fn == 0:
        undefined.append("f_measure")
        f = 0.0
    elif tp == 0:
        f = 0.0
    else:
        # tp > 0 guarantees ppv and tpr are both positive
        f = 2.0 * ppv * tpr / (ppv + tpr)
    mcc_den = math.sqrt(float(tp + fp) * float(tp + fn) * float(tn + fp) * float(tn + fn))
    if mcc_den == 0.0:
        undefined.append("mcc")
        mcc = 0.0
    else:
        mcc = (float(tp) * float(tn) - float(fp) * float(fn)) / mcc_den
    acc = ratio("accuracy", tp + tn, tp + fp + fn + tn)
    return ClassMetrics(tpr=tpr, fpr=fpr, specificity=specificity, npv=npv, ppv=ppv,
                        f_measure=f, mcc=mcc, accuracy=acc, undefined=tuple(undefined))


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple
    per_class: dict            # class code -> ClassMetrics
    overall: ClassMetrics      # micro-averaged one-vs-rest
    accuracy: float            # trace / total
    build_seconds: float | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "overall": self.overall.to_dict(),
            "per_class": {str(c): m.to_dict() for c, m in self.per_class.items()},
            "build_seconds": self.build_seconds,
        }


def compute_metrics(cm: ConfusionMatrix, build_seconds: float | None = None) -> MetricsReport:
    """Per-class one-vs-rest metrics, micro-averaged overall row, accuracy."""
    per_class = {}
    sums = [0, 0, 0, 0]
    for c in cm.classes:
        tp, fp, fn, tn = cm.binary(c)
        per_class[c] = _binary_metrics(tp, fp, fn, tn)
        for i, v in enumerate((tp, fp, fn, tn)):
            sums[i] += v
    overall = _binary_metrics(*sums)
    return MetricsReport(classes=cm.classes, per_class=per_class, overall=overall,
                         accuracy=cm.accuracy(), build_seconds=build_seconds)


# -- cross-validation ---------------------------------------------------------


@dataclass(frozen=True)
class CVConfig:
    k: int = 10
    seed: int = 0
    stratified: bool = True


def fold_assignments(classes: np.ndarray, cfg: CVConfig) -> np.ndarray:
    """Fold id per record. Stratified: per-class shuffle, round-robin deal,
    so fold sizes within a class differ by at most one and classes with
    fewer than k records land one per fold until they run out."""
    n = len(classes)
    if cfg.k < 2:
        raise ValueError("cross-validation needs k >= 2")
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the {n} available records")
    rng = np.random.default_rng(derive_seed(cfg.seed, "cv"))
    folds = np.empty(n, dtype=np.int64)
    if cfg.stratified:
        for c in np.unique(classes):
            idx = np.flatnonzero(classes == c)
            rng.shuffle(idx)
            folds[idx] = np.arange(idx.size) % cfg.k
    else:
        perm = rng.permutation(n)
        folds[perm] = np.arange(n) % cfg.k
    return folds


@dataclass(frozen=True)
class CVResult:
    fold_reports: tuple
    pooled: ConfusionMatrix
    report: MetricsReport      # metrics over the pooled confusion matrix
    accuracy_mean: float       # mean of the per-fold accuracies
    features: tuple
    model_spec: ModelSpec

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "model": self.model_spec.to_dict(),
            "accuracy_mean": self.accuracy_mean,
            "pooled_confusion": self.pooled.to_dict(),
            "report": self.report.to_dict(),
            "fold_accuracies": [r.accuracy for r in self.fold_reports],
        }


def _run_fold(d: Dataset, features, spec: ModelSpec, cfg: CVConfig,
              folds: np.ndarray, f: int, classes: tuple):
    test_idx = np.flatnonzero(folds == f)
    train_idx = np.flatnonzero(folds != f)
    train = d.take(train_idx)
    test = d.take(test_idx)
    model = train_model(spec, train, features, seed=derive_seed(cfg.seed, "fold", f))
    pred = model.predict(test)
    return ConfusionMatrix.from_labels(test.classes, pred, classes=classes)


def cross_validate(d: Dataset, features, spec: ModelSpec, cfg: CVConfig = CVConfig(),
                   fold_ids: np.ndarray | None = None, jobs: int = 1) -> CVResult:
    """k-fold CV; per-fold model seeds derive from (seed, fold), so results
    do not depend on scheduling. Pass fold_ids to reuse one fold layout
    across several feature sets for paired comparisons."""
    features = d.schema.validate_feature_ids(features)
    folds = fold_assignments(d.classes, cfg) if fold_ids is None else np.asarray(fold_ids)
    if folds.shape != (d.n_records,):
        raise ValueError("fold_ids must assign a fold to every record")
    classes = tuple(int(c) for c in np.unique(d.classes))
    fold_list = [f for f in range(cfg.k) if (folds == f).any()]
    if jobs and jobs > 1:
        from joblib import Parallel, delayed
        cms = Parallel(n_jobs=jobs)(
            delayed(_run_fold)(d, features, spec, cfg, folds, f, classes)
            for f in fold_list)
    else:
        cms = [_run_fold(d, features, spec, cfg, folds, f, classes) for f in fold_list]
    fold_reports = tuple(compute_metrics(cm) for cm in cms)
    pooled = cms[0]
    for cm in cms[1:]:
        pooled = pooled.add(cm)
    accuracy_mean = float(np.mean([r.accuracy for r in fold_reports]))
    return CVResult(fold_reports=fold_reports, pooled=pooled,
                    report=compute_metrics(pooled), accuracy_mean=accuracy_mean,
                    features=features, model_spec=spec)


def measure_build_seconds(spec: ModelSpec, d: Dataset, features, seed: int = 0) -> float:
    """Wall-clock time of one full-dataset training run."""
    t0 = time.perf_counter()
    train_model(spec, d, features, seed=seed)
    return time.perf_counter() - t0
