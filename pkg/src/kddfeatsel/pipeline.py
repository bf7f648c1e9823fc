"""Guarded feature reduction and the two-phase best-set selection.

Every candidate edit of the working feature set is judged by a fixed-fold
cross-validation of the budgeted model. A GuardPolicy accepts the edit only
if overall accuracy and every per-class detection rate stay within epsilon
of the current point; Gradually-ADD additionally demands a strict
improvement so the set cannot absorb useless features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import EmptyEnsembleError, ModelSpec
from .dataset import Dataset, build_class_dataset
from .evaluation import CVConfig, CVResult, cross_validate, fold_assignments
from .featsel import CfsEvaluator, ConsensusReport, FeatureSet, RankedList
from .schema import AttackClass

__all__ = [
    "GuardPolicy",
    "EvalPoint",
    "CvEvaluator",
    "TraceStep",
    "SelectionTrace",
    "reduce_features",
    "gradual_add",
    "gradual_delete",
    "select_best",
    "SelectionDecision",
    "build_start_set",
    "ADD_CLASS_ORDER",
    "DELETE_CLASS_ORDER",
]

ADD_CLASS_ORDER = (AttackClass.U2R, AttackClass.R2L, AttackClass.PROBE)
DELETE_CLASS_ORDER = (AttackClass.DOS, AttackClass.PROBE, AttackClass.R2L, AttackClass.U2R)


@dataclass(frozen=True)
class EvalPoint:
    """What the guard compares: overall accuracy plus per-class detection."""

    accuracy: float
    tpr: dict  # class code -> tpr

    @classmethod
    def from_cv(cls, res: CVResult) -> "EvalPoint":
        tpr = {c: res.report.per_class[c].tpr for c in res.report.classes}
        return cls(accuracy=res.accuracy_mean, tpr=dict(tpr))

    @property
    def min_tpr(self) -> float:
        return min(self.tpr.values()) if self.tpr else 0.0

    def key(self) -> tuple:
        return (self.accuracy, self.min_tpr)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy,
                "tpr": {str(c): v for c, v in sorted(self.tpr.items())}}


@dataclass(frozen=True)
class GuardPolicy:
    """Tolerated slack for accepting an edit of the feature set."""

    epsilon: float = 0.001

    def check(self, before: EvalPoint, after: EvalPoint) -> tuple:
        """(ok, reasons): accuracy and each class's TPR may drop by at most epsilon."""
        reasons = []
        if after.accuracy < before.accuracy - self.epsilon:
            reasons.append(f"accuracy {after.accuracy:.6f} fell below "
                           f"{before.accuracy:.6f} - {self.epsilon}")
        for c, before_tpr in before.tpr.items():
            after_tpr = after.tpr.get(c, 0.0)
            if after_tpr < before_tpr - self.epsilon:
                reasons.append(f"class {AttackClass(c).name} tpr {after_tpr:.6f} fell "
                               f"below {before_tpr:.6f} - {self.epsilon}")
        return (not reasons, reasons)


class CvEvaluator:
    """Cross-validates feature sets on one frozen fold layout, memoized.

    Freezing the folds makes every comparison paired: two feature sets are
    judged on identical train/test partitions.
    """

    def __init__(self, d: Dataset, spec: ModelSpec, cv: CVConfig, jobs: int = 1):
        self.d = d
        self.spec = spec
        self.cv = cv
        self.jobs = jobs
        self.fold_ids = fold_assignments(d.classes, cv)
        self._cache = {}

    def evaluate(self, features) -> tuple:
        """(EvalPoint, CVResult) for a feature set, cached by membership."""
        key = frozenset(int(f) for f in features)
        if not key:
            raise ValueError("cannot evaluate an empty feature set")
        hit = self._cache.get(key)
        if hit is None:
            res = cross_validate(self.d, sorted(key), self.spec, self.cv,
                                 fold_ids=self.fold_ids, jobs=self.jobs)
            hit = (EvalPoint.from_cv(res), res)
            self._cache[key] = hit
        return hit


@dataclass(frozen=True)
class TraceStep:
    action: str            # "add" | "delete"
    feature: int
    accepted: bool
    reason: str
    before: EvalPoint
    after: EvalPoint

    def to_dict(self) -> dict:
        return {"action": self.action, "feature": self.feature,
                "accepted": self.accepted, "reason": self.reason,
                "metrics_before": self.before.to_dict(),
                "metrics_after": self.after.to_dict()}


@dataclass
class SelectionTrace:
    """Replayable event log of one selection procedure."""

    procedure: str
    start: tuple
    steps: list = field(default_factory=list)
    final: tuple = ()

    def log(self, step: TraceStep) -> None:
        self.steps.append(step)

    def replay(self) -> tuple:
        """Reapply accepted steps to the start set; must equal `final`."""
        current = set(self.start)
        for s in self.steps:
            if not s.accepted:
                continue
            if s.action == "add":
                current.add(s.feature)
            elif s.action == "delete":
                current.discard(s.feature)
        return tuple(sorted(current))

    def to_dict(self) -> dict:
        return {"procedure": self.procedure, "start": list(self.start),
                "final": list(self.final), "steps": [s.to_dict() for s in self.steps]}


def _combined_tail_order(algo_rank: RankedList, class_rank: RankedList, q: int) -> list:
    """Features in the bottom-q of both rankings, least important first."""
    tail_a = set(algo_rank.bottom(q))
    tail_b = set(class_rank.bottom(q))
    common = tail_a & tail_b
    def combined(f):
        return (algo_rank.position_from_bottom(f) + class_rank.position_from_bottom(f), f)
    return sorted(common, key=combined)


def reduce_features(d: Dataset, algo_rank: RankedList, class_rank: RankedList,
                    evaluator: CvEvaluator, guard: GuardPolicy = GuardPolicy(),
                    tail_q: int = 10) -> tuple:
    """Stage-3 reduction: drop common low-importance features when harmless.

    Candidates are the intersection of the two rankings' bottom-q tails,
    tried least important first; each deletion must pass the guard against
    the current working point. Returns (FeatureSet, SelectionTrace).
    """
    k = d.schema.n_features
    all_ids = set(range(1, k + 1))
    for name, rank in (("algorithm", algo_rank), ("class", class_rank)):
        if set(rank.features()) != all_ids:
            raise ValueError(f"{name} ranking must cover all {k} features exactly")
    current = set(all_ids)
    trace = SelectionTrace(procedure="reduce", start=tuple(sorted(current)))
    point, _ = evaluator.evaluate(current)
    for f in _combined_tail_order(algo_rank, class_rank, tail_q):
        try:
            after, _ = evaluator.evaluate(current - {f})
        except EmptyEnsembleError as e:
            trace.log(TraceStep(action="delete", feature=f, accepted=False,
                                reason=f"evaluation failed: {e}",
                                before=point, after=point))
            continue
        ok, reasons = guard.check(point, after)
        trace.log(TraceStep(action="delete", feature=f, accepted=ok,
                            reason="guard passed" if ok else "; ".join(reasons),
                            before=point, after=after))
        if ok:
            current.remove(f)
            point = after
    trace.final = tuple(sorted(current))
    return FeatureSet(frozenset(current), merit=None), trace


def gradual_add(d: Dataset, start, class_pools: dict, evaluator: CvEvaluator,
                guard: GuardPolicy = GuardPolicy(),
                class_order=ADD_CLASS_ORDER) -> tuple:
    """Grow the start set from per-class candidate pools.

    For each class in order, repeatedly evaluate every remaining candidate;
    accept the best one that both passes the guard and strictly improves
    (accuracy, min per-class TPR). Returns (FeatureSet, SelectionTrace).
    """
    current = set(int(f) for f in start)
    if not current:
        raise ValueError("gradual_add needs a non-empty start set")
    trace = SelectionTrace(procedure="gradual_add", start=tuple(sorted(current)))
    point, _ = evaluator.evaluate(current)
    for cls in class_order:
        pool = [int(f) for f in class_pools.get(AttackClass(cls).name, ())
                if int(f) not in current]
        pool.sort()
        while pool:
            outcomes = []
            for f in pool:
                try:
                    after, _ = evaluator.evaluate(current | {f})
                except EmptyEnsembleError as e:
                    trace.log(TraceStep("add", f, False, f"evaluation failed: {e}",
                                        point, point))
                    continue
                ok, reasons = guard.check(point, after)
                improving = after.key() > point.key()
                outcomes.append((f, after, ok, improving, reasons))
            chosen = None
            for f, after, ok, improving, _ in outcomes:
                if ok and improving and (chosen is None or after.key() > chosen[1].key()):
                    chosen = (f, after)
            for f, after, ok, improving, reasons in outcomes:
                if chosen is not None and f == chosen[0]:
                    trace.log(TraceStep("add", f, True, "guard passed, improves "
                                        "(accuracy, min tpr)", point, after))
                elif not ok:
                    trace.log(TraceStep("add", f, False, "; ".join(reasons), point, after))
                elif not improving:
                    trace.log(TraceStep("add", f, False,
                                        "no strict (accuracy, min tpr) improvement",
                                        point, after))
                else:
                    trace.log(TraceStep("add", f, False, "outperformed by another candidate",
                                        point, after))
            if chosen is None:
                break
            current.add(chosen[0])
            point = chosen[1]
            pool.remove(chosen[0])
    trace.final = tuple(sorted(current))
    return FeatureSet(frozenset(current), merit=None), trace


def _class_su_ranking(d: Dataset, cls: AttackClass, members) -> list:
    """Members ordered by SU against the class on its NORMAL+class dataset,
    least relevant first."""
    sub = build_class_dataset(d, cls)
    ev = CfsEvaluator.for_dataset(sub)
    return sorted(members, key=lambda f: (ev.su_feature_class(int(f)), int(f)))


def gradual_delete(d: Dataset, start, evaluator: CvEvaluator,
                   guard: GuardPolicy = GuardPolicy(),
                   class_order=DELETE_CLASS_ORDER) -> tuple:
    """Shrink the start set, guard-checking members from least important up.

    Each class pass ranks current members by SU on that class's dataset and
    tries them in ascending order; passes cycle through the class order
    until a full cycle deletes nothing. Returns (FeatureSet, SelectionTrace).
    """
    current = set(int(f) for f in start)
    if len(current) < 2:
        raise ValueError("gradual_delete needs at least two features to consider")
    trace = SelectionTrace(procedure="gradual_delete", start=tuple(sorted(current)))
    point, _ = evaluator.evaluate(current)
    su_order = {cls: _class_su_ranking(d, cls, sorted(current)) for cls in class_order}
    changed = True
    while changed:
        changed = False
        for cls in class_order:
            for f in [f for f in su_order[cls] if f in current]:
                if len(current) == 1:
                    break
                try:
                    after, _ = evaluator.evaluate(current - {f})
                except EmptyEnsembleError as e:
                    trace.log(TraceStep("delete", f, False,
                                        f"evaluation failed: {e}", point, point))
                    continue
                ok, reasons = guard.check(point, after)
                trace.log(TraceStep("delete", f, ok,
                                    "guard passed" if ok else "; ".join(reasons),
                                    point, after))
                if ok:
                    current.remove(f)
                    point = after
                    changed = True
    trace.final = tuple(sorted(current))
    return FeatureSet(frozenset(current), merit=None), trace


@dataclass(frozen=True)
class SelectionDecision:
    chosen: FeatureSet
    source: str               # "add" | "delete"
    comparison: dict
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {"chosen": list(self.chosen.ordered()), "source": self.source,
                "comparison": self.comparison, "warnings": list(self.warnings)}


def select_best(evaluator: CvEvaluator, add_set: FeatureSet | None,
                delete_set: FeatureSet | None) -> SelectionDecision:
    """Pick between the two phases by (accuracy, min TPR, smaller set).

    The evaluator here should carry the full-budget model. A missing phase
    result forfeits the comparison with a warning.
    """
    if add_set is None and delete_set is None:
        raise ValueError("both selection phases are missing")
    entries = {}
    comparison = {}
    warnings = ()
    for name, fs in (("add", add_set), ("delete", delete_set)):
        if fs is None:
            continue
        try:
            point, res = evaluator.evaluate(fs.members)
        except EmptyEnsembleError as e:
            warnings += (f"the {name} phase result failed full-budget evaluation: {e}",)
            comparison[name] = {"features": list(fs.ordered()),
                                "cardinality": len(fs), "error": str(e)}
            continue
        entries[name] = (point, fs)
        comparison[name] = {"features": list(fs.ordered()),
                            "cardinality": len(fs),
                            "accuracy": point.accuracy,
                            "min_tpr": point.min_tpr}
    if not entries:
        raise ValueError("no selection phase result survived full-budget evaluation")
    if len(entries) == 1:
        source = next(iter(entries))
        warnings += (f"only the {source} phase produced a result; comparison skipped",)
    else:
        def decision_key(name):
            point, fs = entries[name]
            return (point.accuracy, point.min_tpr, -len(fs))
        source = max(sorted(entries), key=decision_key)
    return SelectionDecision(chosen=entries[source][1], source=source,
                             comparison=comparison, warnings=warnings)


def build_start_set(report: ConsensusReport, min_class_rows: int = 4,
                    min_algo_votes: int = 5) -> tuple:
    """Smallest-common start set for Gradually-ADD.

    A feature qualifies when it appears in at least min_class_rows of the
    per-dataset consensus sets and is selected by at least min_algo_votes
    methods overall. Thresholds relax by one alternately (class rows first)
    down to 1/1; a grid with nothing selected anywhere raises.
    Returns (FeatureSet, relaxation trace list).
    """
    class_rows = {}
    for tag in report.tags:
        for f in report.consensus[tag]:
            class_rows[f] = class_rows.get(f, 0) + 1
    algo_votes = {}
    for union in report.method_unions.values():
        for f in union:
            algo_votes[f] = algo_votes.get(f, 0) + 1

    def candidates(cr, av):
        return sorted(f for f in algo_votes
                      if class_rows.get(f, 0) >= cr and algo_votes[f] >= av)

    cr, av = min_class_rows, min_algo_votes
    relax_class_next = True
    trail = []
    while True:
        found = candidates(cr, av)
        trail.append({"min_class_rows": cr, "min_algo_votes": av,
                      "candidates": len(found)})
        if found:
            return FeatureSet(frozenset(found), merit=None), trail
        if cr == 1 and av == 1:
            break
        if relax_class_next and cr > 1:
            cr -= 1
        elif av > 1:
            av -= 1
        else:
            cr -= 1
        relax_class_next = not relax_class_next
    if not algo_votes:
        raise ValueError("the selection grid chose no features at all")
    top = max(algo_votes.values())
    found = sorted(f for f, v in algo_votes.items() if v == top)
    trail.append({"min_class_rows": 1, "min_algo_votes": 1,
                  "candidates": len(found), "fallback": "max algorithm votes"})
    return FeatureSet(frozenset(found), merit=None), trail
