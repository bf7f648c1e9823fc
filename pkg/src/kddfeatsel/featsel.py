"""Correlation-based feature subset evaluation and subset search.

The merit of a subset S against the class is

    merit(S) = k * mean_su(f, class) / sqrt(k + k (k - 1) * mean_su(f, f'))

over symmetric uncertainty of MDL-discretized columns. Seven search
strategies optimize it: two ranker-driven prefix searches, best-first,
greedy stepwise, and three stochastic searches (genetic, binary PSO, tabu).
All of them are deterministic given their seed.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .dataset import Dataset, build_class_dataset
from .rng import derive_seed
from .schema import ATTACK_ONLY
from .stats import (
    DiscretizedTable,
    discretize_dataset,
    gain_ratio,
    info_gain,
    symmetric_uncertainty,
)

__all__ = [
    "FeatureSet",
    "RankedList",
    "SearchConfig",
    "SearchOutcome",
    "CfsEvaluator",
    "cfs_merit",
    "rank_features",
    "rank_search",
    "greedy_stepwise",
    "best_first",
    "tabu_search",
    "bpso_search",
    "genetic_search",
    "run_all_methods",
    "aggregate_consensus",
    "GridCell",
    "SelectionGrid",
    "GridCellError",
    "ConsensusReport",
    "METHOD_ORDER",
    "DISPLAY_NAMES",
    "GRID_TAGS",
    "jaccard",
    "load_reference_selections",
    "reference_grid",
    "similarity_report",
]

GRID_TAGS = ("ALL",) + tuple(c.name for c in ATTACK_ONLY)

METHOD_ORDER = ("rank_gain_ratio", "rank_info_gain", "best_first", "evolutionary",
                "greedy", "pso", "tabu")

DISPLAY_NAMES = {
    "rank_gain_ratio": "Rank Search (Gain Ratio)",
    "rank_info_gain": "Rank Search (Info Gain)",
    "best_first": "Best First",
    "evolutionary": "Evolutionary Search",
    "greedy": "Greedy Stepwise",
    "pso": "PSO Search",
    "tabu": "Tabu Search",
}


@dataclass(frozen=True)
class FeatureSet:
    """An unordered set of 1-based feature ids with an optional merit."""

    members: frozenset
    merit: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(f) for f in self.members))

    def ordered(self) -> tuple:
        return tuple(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, f) -> bool:
        return int(f) in self.members


@dataclass(frozen=True)
class RankedList:
    """Features ordered by descending score; ties fall to the lower id."""

    entries: tuple  # ((feature_id, score), ...)

    @classmethod
    def from_scores(cls, scores: dict) -> "RankedList":
        ids = sorted(scores)
        if len(set(ids)) != len(scores):
            raise ValueError("duplicate feature ids in ranking")
        order = sorted(ids, key=lambda f: (-scores[f], f))
        return cls(entries=tuple((f, float(scores[f])) for f in order))

    def features(self) -> tuple:
        return tuple(f for f, _ in self.entries)

    def bottom(self, q: int) -> tuple:
        """The q lowest-ranked feature ids, least important last."""
        return self.features()[-q:] if q > 0 else ()

    def position_from_bottom(self, f: int) -> int:
        feats = self.features()
        return len(feats) - 1 - feats.index(f)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for every search method; seed drives all stochastic ones."""

    seed: int = 0
    stale_limit: int = 5
    ga_population: int = 20
    ga_generations: int = 20
    ga_crossover: float = 0.6
    ga_mutation: float = 0.033
    ga_tournament: int = 2
    ga_elitism: int = 1
    pso_swarm: int = 20
    pso_iterations: int = 50
    pso_inertia_start: float = 0.9
    pso_inertia_end: float = 0.4
    pso_c1: float = 2.0
    pso_c2: float = 2.0
    pso_vmax: float = 4.0
    tabu_tenure: int = 5
    tabu_iterations: int = 250

    def rng(self, *parts) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.seed, *parts))


@dataclass(frozen=True)
class SearchOutcome:
    method: str
    features: tuple
    merit: float
    n_evaluations: int
    trace: tuple = ()

    def feature_set(self) -> FeatureSet:
        return FeatureSet(frozenset(self.features), merit=self.merit)


class CfsEvaluator:
    """Caches symmetric-uncertainty terms and memoizes subset merits."""

    def __init__(self, table: DiscretizedTable):
        self.table = table
        self.k = len(table.columns)
        self._su_fc = np.full(self.k, np.nan)
        self._su_ff = np.full((self.k, self.k), np.nan)
        self._memo = {}
        self.evaluations = 0

    @classmethod
    def for_dataset(cls, d: Dataset) -> "CfsEvaluator":
        return cls(discretize_dataset(d))

    def su_feature_class(self, f: int) -> float:
        j = f - 1
        if np.isnan(self._su_fc[j]):
            col = self.table.column(f)
            self._su_fc[j] = symmetric_uncertainty(col.codes, self.table.labels)
        return float(self._su_fc[j])

    def su_pair(self, f: int, g: int) -> float:
        i, j = f - 1, g - 1
        if np.isnan(self._su_ff[i, j]):
            v = symmetric_uncertainty(self.table.column(f).codes, self.table.column(g).codes)
            self._su_ff[i, j] = v
            self._su_ff[j, i] = v
        return float(self._su_ff[i, j])

    def merit(self, members) -> float:
        """Subset merit; the empty set scores 0 so searches can pass through it."""
        self.evaluations += 1
        key = frozenset(int(f) for f in members)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        m = len(key)
        if m == 0:
            v = 0.0
        else:
            ids = sorted(key)
            rcf = float(np.mean([self.su_feature_class(f) for f in ids]))
            if m == 1:
                v = rcf
            else:
                rff = float(np.mean([self.su_pair(f, g)
                                     for f, g in itertools.combinations(ids, 2)]))
                v = m * rcf / math.sqrt(m + m * (m - 1) * rff)
        self._memo[key] = v
        return v

    def merit_mask(self, mask: np.ndarray) -> float:
        return self.merit(np.flatnonzero(mask) + 1)


def cfs_merit(features, source) -> float:
    """Merit of a non-empty feature set; source is a Dataset or CfsEvaluator."""
    ids = [int(f) for f in features]
    if not ids:
        raise ValueError("merit of an empty feature set is undefined")
    ev = source if isinstance(source, CfsEvaluator) else CfsEvaluator.for_dataset(source)
    for f in ids:
        if not 1 <= f <= ev.k:
            raise ValueError(f"feature index {f} out of range 1..{ev.k}")
    return ev.merit(ids)


_SCORERS = {
    "info_gain": info_gain,
    "gain_ratio": gain_ratio,
    "su": symmetric_uncertainty,
}


def rank_features(source, scorer: str = "info_gain") -> RankedList:
    """Score every feature against the class and rank them all."""
    if scorer not in _SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; expected one of {sorted(_SCORERS)}")
    table = source.table if isinstance(source, CfsEvaluator) else \
        (source if isinstance(source, DiscretizedTable) else discretize_dataset(source))
    fn = _SCORERS[scorer]
    scores = {col.feature_id: fn(col, table.labels) for col in table.columns}
    return RankedList.from_scores(scores)


def _ensure_nonempty(ev: CfsEvaluator, features: tuple) -> tuple:
    # degenerate all-noise inputs: fall back to the single best-scoring feature
    if features:
        return features
    su = np.asarray([ev.su_feature_class(f) for f in range(1, ev.k + 1)])
    return (int(np.argmax(su)) + 1,)


def rank_search(ev: CfsEvaluator, scorer: str, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Evaluate merit over ranked prefixes, keep the best (smallest on ties)."""
    before = ev.evaluations
    ranked = rank_features(ev, scorer).features()
    best_m = -math.inf
    best_prefix = ()
    trace = []
    for t in range(1, len(ranked) + 1):
        m = ev.merit(ranked[:t])
        trace.append(m)
        if m > best_m:
            best_m = m
            best_prefix = ranked[:t]
    name = "rank_gain_ratio" if scorer == "gain_ratio" else "rank_info_gain"
    return SearchOutcome(method=name, features=tuple(sorted(best_prefix)), merit=best_m,
                         n_evaluations=ev.evaluations - before, trace=tuple(trace))


def greedy_stepwise(ev: CfsEvaluator, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Forward selection; stops when no addition strictly raises the merit."""
    before = ev.evaluations
    current = []
    current_m = 0.0
    trace = []
    while True:
        best_f = None
        best_m = current_m
        for f in range(1, ev.k + 1):
            if f in current:
                continue
            m = ev.merit(current + [f])
            if m > best_m:
                best_f, best_m = f, m
        if best_f is None:
            break
        current.append(best_f)
        current_m = best_m
        trace.append(best_m)
    features = _ensure_nonempty(ev, tuple(sorted(current)))
    return SearchOutcome(method="greedy", features=features, merit=ev.merit(features),
                         n_evaluations=ev.evaluations - before, trace=tuple(trace))


def best_first(ev: CfsEvaluator, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Forward best-first search with a bounded non-improvement budget.

    Nodes are subsets keyed by merit in a priority queue; expanding a node
    enqueues its unvisited single-feature extensions. The search stops after
    config.stale_limit consecutive expansions that fail to beat the incumbent.
    """
    before = ev.evaluations
    start = ()
    heap = [(-0.0, start)]
    visited = {frozenset()}
    incumbent = start
    incumbent_m = -math.inf
    stale = 0
    while heap and stale < config.stale_limit:
        neg_m, members = heapq.heappop(heap)
        m = -neg_m
        if m > incumbent_m:
            incumbent, incumbent_m = members, m
            stale = 0
        else:
            stale += 1
        for f in range(1, ev.k + 1):
            if f in members:
                continue
            child = tuple(sorted(members + (f,)))
            key = frozenset(child)
            if key in visited:
                continue
            visited.add(key)
            heapq.heappush(heap, (-ev.merit(child), child))
    features = _ensure_nonempty(ev, incumbent)
    return SearchOutcome(method="best_first", features=features, merit=ev.merit(features),
                         n_evaluations=ev.evaluations - before)


def tabu_search(ev: CfsEvaluator, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Single-flip tabu walk with aspiration; returns the best set visited."""
    before = ev.evaluations
    current = frozenset()
    best = current
    best_m = 0.0
    tabu_until = np.zeros(ev.k + 1, dtype=np.int64)
    for it in range(1, config.tabu_iterations + 1):
        move = None
        move_m = -math.inf
        for f in range(1, ev.k + 1):
            cand = current ^ {f}
            m = ev.merit(cand)
            if tabu_until[f] >= it and not m > best_m:
                continue
            if m > move_m:
                move, move_m = f, m
        if move is None:
            break
        current = current ^ {move}
        tabu_until[move] = it + config.tabu_tenure
        if move_m > best_m:
            best, best_m = current, move_m
    features = _ensure_nonempty(ev, tuple(sorted(best)))
    return SearchOutcome(method="tabu", features=features, merit=ev.merit(features),
                         n_evaluations=ev.evaluations - before)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-v))


def bpso_search(ev: CfsEvaluator, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Binary particle swarm over feature masks with a sigmoid transfer."""
    before = ev.evaluations
    rng = config.rng("pso")
    n, s, t_max = ev.k, config.pso_swarm, config.pso_iterations
    x = rng.random((s, n)) < 0.5
    vel = rng.uniform(-config.pso_vmax, config.pso_vmax, (s, n))
    fit = np.asarray([ev.merit_mask(x[i]) for i in range(s)])
    pbest = x.copy()
    pbest_f = fit.copy()
    g = int(np.argmax(fit))
    gbest = x[g].copy()
    gbest_f = float(fit[g])
    for t in range(t_max):
        if t_max > 1:
            w = config.pso_inertia_start + (config.pso_inertia_end -
                                            config.pso_inertia_start) * t / (t_max - 1)
        else:
            w = config.pso_inertia_start
        r1 = rng.random((s, n))
        r2 = rng.random((s, n))
        vel = (w * vel + config.pso_c1 * r1 * (pbest.astype(float) - x.astype(float))
               + config.pso_c2 * r2 * (gbest.astype(float) - x.astype(float)))
        np.clip(vel, -config.pso_vmax, config.pso_vmax, out=vel)
        x = rng.random((s, n)) < _sigmoid(vel)
        fit = np.asarray([ev.merit_mask(x[i]) for i in range(s)])
        better = fit > pbest_f
        pbest[better] = x[better]
        pbest_f[better] = fit[better]
        g = int(np.argmax(pbest_f))
        if pbest_f[g] > gbest_f:
            gbest = pbest[g].copy()
            gbest_f = float(pbest_f[g])
    features = _ensure_nonempty(ev, tuple(np.flatnonzero(gbest) + 1))
    return SearchOutcome(method="pso", features=tuple(int(f) for f in features),
                         merit=ev.merit(features), n_evaluations=ev.evaluations - before)


def genetic_search(ev: CfsEvaluator, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Generational GA on feature masks: tournament, uniform crossover, bit flips."""
    before = ev.evaluations
    rng = config.rng("ga")
    n, pop_n = ev.k, config.ga_population
    pop = rng.random((pop_n, n)) < 0.5
    fit = np.asarray([ev.merit_mask(pop[i]) for i in range(pop_n)])
    g = int(np.argmax(fit))
    best_mask = pop[g].copy()
    best_f = float(fit[g])

    def tournament() -> np.ndarray:
        idx = rng.integers(0, pop_n, size=config.ga_tournament)
        return pop[idx[int(np.argmax(fit[idx]))]]

    for _ in range(config.ga_generations):
        children = [pop[int(np.argmax(fit))].copy() for _ in range(config.ga_elitism)]
        while len(children) < pop_n:
            p1 = tournament()
            p2 = tournament()
            if rng.random() < config.ga_crossover:
                take = rng.random(n) < 0.5
                child = np.where(take, p1, p2)
            else:
                child = p1.copy()
            child = child ^ (rng.random(n) < config.ga_mutation)
            children.append(child)
        pop = np.asarray(children[:pop_n])
        fit = np.asarray([ev.merit_mask(pop[i]) for i in range(pop_n)])
        g = int(np.argmax(fit))
        if fit[g] > best_f:
            best_mask = pop[g].copy()
            best_f = float(fit[g])
    features = _ensure_nonempty(ev, tuple(int(f) for f in np.flatnonzero(best_mask) + 1))
    return SearchOutcome(method="evolutionary", features=features, merit=ev.merit(features),
                         n_evaluations=ev.evaluations - before)


_RUNNERS = {
    "rank_gain_ratio": lambda ev, cfg: rank_search(ev, "gain_ratio", cfg),
    "rank_info_gain": lambda ev, cfg: rank_search(ev, "info_gain", cfg),
    "best_first": best_first,
    "evolutionary": genetic_search,
    "greedy": greedy_stepwise,
    "pso": bpso_search,
    "tabu": tabu_search,
}


@dataclass(frozen=True)
class GridCell:
    method: str
    dataset_tag: str
    features: tuple
    merit: float
    n_evaluations: int
    seconds: float


class GridCellError(RuntimeError):
    """A search failed; identifies the (method, dataset) cell."""

    def __init__(self, method: str, dataset_tag: str, cause: BaseException):
        self.method = method
        self.dataset_tag = dataset_tag
        super().__init__(f"search {method!r} on dataset {dataset_tag!r} failed: {cause}")


@dataclass(frozen=True)
class SelectionGrid:
    methods: tuple
    tags: tuple
    cells: dict  # (method, tag) -> GridCell

    def cell(self, method: str, tag: str) -> GridCell:
        return self.cells[(method, tag)]

    def method_union(self, method: str) -> tuple:
        out = set()
        for tag in self.tags:
            out.update(self.cells[(method, tag)].features)
        return tuple(sorted(out))

    def to_dict(self) -> dict:
        body = {}
        for method in self.methods:
            body[method] = {
                "display_name": DISPLAY_NAMES.get(method, method),
                "cells": {
                    tag: {
                        "features": list(self.cells[(method, tag)].features),
                        "merit": self.cells[(method, tag)].merit,
                        "n_evaluations": self.cells[(method, tag)].n_evaluations,
                    }
                    for tag in self.tags
                },
                "union": list(self.method_union(method)),
            }
        return {"tags": list(self.tags), "methods": body}


def _run_tag(d: Dataset, tag: str, methods: tuple, config: SearchConfig) -> list:
    source = d if tag == "ALL" else build_class_dataset(d, ATTACK_ONLY[GRID_TAGS.index(tag) - 1])
    ev = CfsEvaluator.for_dataset(source)
    cells = []
    for method in methods:
        # stable per-cell seed so scheduling order cannot matter
        cfg = replace(config, seed=derive_seed(config.seed, "search", method, tag))
        t0 = time.perf_counter()
        try:
            out = _RUNNERS[method](ev, cfg)
        except Exception as e:
            raise GridCellError(method, tag, e) from e
        cells.append(GridCell(method=method, dataset_tag=tag, features=out.features,
                              merit=out.merit, n_evaluations=out.n_evaluations,
                              seconds=time.perf_counter() - t0))
    return cells


def run_all_methods(d: Dataset, methods=None, config: SearchConfig = SearchConfig(),
                    jobs: int = 1) -> SelectionGrid:
    """Run every requested method on ALL plus the four class datasets."""
    methods = tuple(methods) if methods else METHOD_ORDER
    for m in methods:
        if m not in _RUNNERS:
            raise ValueError(f"unknown search method {m!r}; expected one of {METHOD_ORDER}")
    if jobs and jobs > 1:
        from joblib import Parallel, delayed
        per_tag = Parallel(n_jobs=jobs)(
            delayed(_run_tag)(d, tag, methods, config) for tag in GRID_TAGS)
    else:
        per_tag = [_run_tag(d, tag, methods, config) for tag in GRID_TAGS]
    cells = {}
    for tag_cells in per_tag:
        for cell in tag_cells:
            cells[(cell.method, cell.dataset_tag)] = cell
    return SelectionGrid(methods=methods, tags=GRID_TAGS, cells=cells)


@dataclass(frozen=True)
class ConsensusReport:
    """Vote counts per (feature, dataset) plus threshold-filtered consensus sets."""

    tags: tuple
    methods: tuple
    vote_threshold: int
    votes: dict        # tag -> {feature -> method count}
    consensus: dict    # tag -> tuple of features with votes >= threshold
    method_unions: dict  # method -> tuple
    n_features: int

    def algorithm_rank(self) -> RankedList:
        """Rank by how many methods selected the feature anywhere (0..#methods)."""
        scores = {f: 0 for f in range(1, self.n_features + 1)}
        for union in self.method_unions.values():
            for f in union:
                scores[f] += 1
        return RankedList.from_scores(scores)

    def class_importance_rank(self) -> RankedList:
        """Rank by total selections over every dataset column."""
        scores = {f: 0 for f in range(1, self.n_features + 1)}
        for tag in self.tags:
            for f, v in self.votes[tag].items():
                scores[f] += v
        return RankedList.from_scores(scores)

    def to_dict(self) -> dict:
        return {
            "vote_threshold": self.vote_threshold,
            "votes": {tag: {str(f): v for f, v in sorted(self.votes[tag].items())}
                      for tag in self.tags},
            "consensus": {tag: list(self.consensus[tag]) for tag in self.tags},
            "method_unions": {m: list(u) for m, u in self.method_unions.items()},
        }


def aggregate_consensus(grid: SelectionGrid, vote_threshold: int = 4,
                        n_features: int | None = None) -> ConsensusReport:
    """Count per-dataset method votes and keep features at or above threshold."""
    if vote_threshold < 1:
        raise ValueError("vote_threshold must be at least 1")
    votes = {}
    consensus = {}
    for tag in grid.tags:
        counts = {}
        for method in grid.methods:
            for f in grid.cells[(method, tag)].features:
                counts[f] = counts.get(f, 0) + 1
        votes[tag] = counts
        consensus[tag] = tuple(sorted(f for f, v in counts.items() if v >= vote_threshold))
    unions = {m: grid.method_union(m) for m in grid.methods}
    if n_features is None:
        n_features = max((f for tag in grid.tags for f in votes[tag]), default=0)
    return ConsensusReport(tags=grid.tags, methods=grid.methods,
                           vote_threshold=vote_threshold, votes=votes,
                           consensus=consensus, method_unions=unions,
                           n_features=n_features)


# -- reference selections and similarity diagnostics --------------------------


def jaccard(a, b) -> float:
    """|A & B| / |A | B|; two empty sets count as identical."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def load_reference_selections() -> dict:
    """Bundled per-method and per-class reference selections on KDD'99.

    Returns per_method (method -> tag -> features), consensus (tag ->
    commonly important features), and final_set (the 11-feature reference
    outcome of the full procedure).
    """
    raw = json.loads(resources.files("kddfeatsel.data")
                     .joinpath("reference_selections.json").read_text())
    per_method = {m: {tag: tuple(sorted(v)) for tag, v in rows.items() if tag != "union"}
                  for m, rows in raw["per_method"].items()}
    return {
        "per_method": per_method,
        "consensus": {tag: tuple(sorted(v)) for tag, v in raw["consensus"].items()},
        "final_set": tuple(sorted(raw["final_set"])),
    }


def reference_grid() -> SelectionGrid:
    """The bundled selections as a grid; merit/timing fields are zeroed."""
    ref = load_reference_selections()
    methods = tuple(m for m in METHOD_ORDER if m in ref["per_method"])
    cells = {(m, tag): GridCell(method=m, dataset_tag=tag,
                                features=ref["per_method"][m][tag],
                                merit=0.0, n_evaluations=0, seconds=0.0)
             for m in methods for tag in GRID_TAGS}
    return SelectionGrid(methods=methods, tags=GRID_TAGS, cells=cells)


def similarity_report(grid: SelectionGrid, consensus: ConsensusReport,
                      final_features=None) -> dict:
    """Jaccard overlap of a run's selections against the bundled references.

    Purely diagnostic: low overlap on non-KDD data is expected. final_features,
    when given, is compared against the bundled 11-feature set.
    """
    ref = load_reference_selections()
    per_method = {}
    vals = []
    for m in grid.methods:
        rows = ref["per_method"].get(m)
        if rows is None:
            continue
        row = {}
        for tag in grid.tags:
            if tag not in rows:
                continue
            j = jaccard(grid.cells[(m, tag)].features, rows[tag])
            row[tag] = j
            vals.append(j)
        per_method[m] = row
    out = {
        "per_method": per_method,
        "per_method_mean": float(np.mean(vals)) if vals else 0.0,
        "consensus": {tag: jaccard(consensus.consensus[tag], ref["consensus"][tag])
                      for tag in consensus.tags if tag in ref["consensus"]},
    }
    if final_features is not None:
        out["final_set"] = {
            "features": [int(f) for f in final_features],
            "reference": [int(f) for f in ref["final_set"]],
            "jaccard": jaccard(final_features, ref["final_set"]),
        }
    return out
