"""Subset merit, rankers, the seven searches, and consensus aggregation."""

import itertools
import math

import numpy as np
import pytest

from kddfeatsel.featsel import (
    GRID_TAGS,
    METHOD_ORDER,
    CfsEvaluator,
    FeatureSet,
    GridCellError,
    RankedList,
    SearchConfig,
    aggregate_consensus,
    best_first,
    bpso_search,
    cfs_merit,
    genetic_search,
    greedy_stepwise,
    jaccard,
    load_reference_selections,
    rank_features,
    rank_search,
    reference_grid,
    run_all_methods,
    similarity_report,
    tabu_search,
)
from kddfeatsel.pipeline import build_start_set
from kddfeatsel.stats import discretize_dataset, symmetric_uncertainty

from conftest import (
    exhaustive_best_merit,
    make_dataset,
    planted_search_dataset,
    ref_cfs_merit,
    ref_su,
)
from kddfeatsel.schema import CONTINUOUS, AttackClass

N, D = AttackClass.NORMAL, AttackClass.DOS

STOCHASTIC = {
    "evolutionary": genetic_search,
    "pso": bpso_search,
    "tabu": tabu_search,
}
DETERMINISTIC = {"best_first": best_first, "greedy": greedy_stepwise}


def _evaluator(seed=0, n_features=8, n_rows=120):
    return CfsEvaluator.for_dataset(planted_search_dataset(seed, n_features, n_rows))


class TestMerit:
    def test_singleton_merit_equals_su(self):
        ev = _evaluator(3)
        table = ev.table
        for f in range(1, ev.k + 1):
            su = symmetric_uncertainty(table.column(f).codes, table.labels)
            assert cfs_merit([f], ev) == pytest.approx(su, abs=1e-12)

    def test_matches_reference_formula(self):
        ev = _evaluator(5, n_features=6)
        su_fc = {f: ev.su_feature_class(f) for f in range(1, 7)}
        su_ff = {frozenset(p): ev.su_pair(*p)
                 for p in itertools.combinations(range(1, 7), 2)}
        for r in (2, 3, 4):
            for subset in itertools.combinations(range(1, 7), r):
                want = ref_cfs_merit(subset, su_fc, su_ff)
                assert ev.merit(subset) == pytest.approx(want, abs=1e-12)

    def test_memoization_skips_recomputation(self):
        ev = _evaluator(1)
        a = ev.merit((1, 2, 3))
        n = ev.evaluations
        b = ev.merit([3, 1, 2])  # same frozenset key
        assert b == a
        assert ev.evaluations == n + 1  # counted, but served from the memo
        assert ev._memo[frozenset({1, 2, 3})] == a

    def test_empty_set_scores_zero_inside_searches(self):
        ev = _evaluator(2)
        assert ev.merit(()) == 0.0

    def test_cfs_merit_rejects_empty_and_out_of_range(self):
        ev = _evaluator(2)
        with pytest.raises(ValueError):
            cfs_merit([], ev)
        with pytest.raises(ValueError):
            cfs_merit([0], ev)
        with pytest.raises(ValueError):
            cfs_merit([ev.k + 1], ev)

    def test_merit_mask_matches_ids(self):
        ev = _evaluator(4)
        mask = np.zeros(ev.k, dtype=bool)
        mask[[0, 3, 5]] = True
        assert ev.merit_mask(mask) == ev.merit((1, 4, 6))

    def test_feature_set_ordering(self):
        fs = FeatureSet(frozenset({9, 2, 5}), merit=0.5)
        assert fs.ordered() == (2, 5, 9)
        assert len(fs) == 3
        assert 5 in fs and 7 not in fs


class TestRanking:
    def test_from_scores_orders_and_breaks_ties_low(self):
        r = RankedList.from_scores({1: 0.2, 2: 0.9, 3: 0.2, 4: 0.0})
        assert r.features() == (2, 1, 3, 4)
        assert r.bottom(2) == (3, 4)
        assert r.bottom(0) == ()
        assert r.position_from_bottom(4) == 0
        assert r.position_from_bottom(2) == 3

    def test_rank_features_matches_su_scorer(self):
        d = planted_search_dataset(7, n_features=6)
        table = discretize_dataset(d)
        r = rank_features(table, scorer="su")
        scores = {c.feature_id: ref_su(c.codes.tolist(), table.labels.tolist())
                  for c in table.columns}
        want = sorted(scores, key=lambda f: (-scores[f], f))
        assert r.features() == tuple(want)

    def test_rank_features_unknown_scorer(self):
        with pytest.raises(ValueError):
            rank_features(planted_search_dataset(0), scorer="chi2")

    def test_rank_search_picks_best_prefix(self):
        ev = _evaluator(9)
        out = rank_search(ev, "info_gain")
        ranked = rank_features(ev, "info_gain").features()
        merits = [ev.merit(ranked[:t]) for t in range(1, len(ranked) + 1)]
        best_t = int(np.argmax(merits)) + 1  # argmax keeps the smallest prefix on ties
        assert set(out.features) == set(ranked[:best_t])
        assert out.merit == pytest.approx(max(merits))
        assert out.method == "rank_info_gain"


class TestSearches:
    def test_deterministic_methods_reproduce(self):
        ev1, ev2 = _evaluator(11), _evaluator(11)
        for fn in DETERMINISTIC.values():
            assert fn(ev1).features == fn(ev2).features

    def test_stochastic_methods_reproduce_under_same_seed(self):
        for name, fn in STOCHASTIC.items():
            cfg = SearchConfig(seed=77)
            a = fn(_evaluator(13), cfg)
            b = fn(_evaluator(13), cfg)
            assert a.features == b.features, name
            assert a.merit == b.merit

    def test_greedy_never_beats_best_first(self):
        # best_first explores a superset of greedy's path
        for seed in range(6):
            ev = _evaluator(seed)
            bf = best_first(ev, SearchConfig())
            gr = greedy_stepwise(ev, SearchConfig())
            assert bf.merit >= gr.merit - 1e-12

    def test_searches_land_near_exhaustive_optimum(self):
        ev = _evaluator(21, n_features=7)
        best_m = exhaustive_best_merit(ev, 7)
        for name, fn in {**DETERMINISTIC, **STOCHASTIC}.items():
            out = fn(ev, SearchConfig(seed=5))
            assert out.merit >= 0.8 * best_m, name

    def test_all_noise_falls_back_to_single_feature(self):
        rng = np.random.default_rng(0)
        cols = [np.round(rng.normal(size=40), 3) for _ in range(4)]
        classes = [N, D] * 20
        d = make_dataset((CONTINUOUS,) * 4, cols, classes)
        ev = CfsEvaluator.for_dataset(d)
        for fn in (*DETERMINISTIC.values(), *STOCHASTIC.values()):
            out = fn(ev, SearchConfig(seed=1))
            assert len(out.features) >= 1, out.method

    def test_outcome_evaluation_counts(self):
        ev = _evaluator(2)
        out = greedy_stepwise(ev)
        assert out.n_evaluations > 0
        assert out.feature_set().merit == out.merit


class TestGrid:
    def test_run_all_methods_covers_every_cell(self):
        d = planted_search_dataset(31, n_features=5, n_rows=100)
        grid = run_all_methods(d, methods=("greedy", "rank_info_gain"),
                               config=SearchConfig(seed=3))
        assert grid.methods == ("greedy", "rank_info_gain")
        assert grid.tags == GRID_TAGS
        assert set(grid.cells) == {(m, t) for m in grid.methods for t in GRID_TAGS}
        for cell in grid.cells.values():
            assert len(cell.features) >= 1
            assert cell.seconds >= 0.0
        doc = grid.to_dict()
        assert doc["tags"] == list(GRID_TAGS)
        assert sorted(doc["methods"]) == ["greedy", "rank_info_gain"]

    def test_parallel_matches_serial(self):
        d = planted_search_dataset(31, n_features=5, n_rows=100)
        a = run_all_methods(d, methods=("greedy",), config=SearchConfig(seed=3))
        b = run_all_methods(d, methods=("greedy",), config=SearchConfig(seed=3), jobs=2)
        for key, cell in a.cells.items():
            assert b.cells[key].features == cell.features

    def test_unknown_method_rejected(self):
        d = planted_search_dataset(0, n_features=4, n_rows=60)
        with pytest.raises(ValueError):
            run_all_methods(d, methods=("simulated_annealing",))

    def test_failing_method_wrapped_with_cell_identity(self, monkeypatch):
        import kddfeatsel.featsel as fs

        def boom(ev, cfg):
            raise RuntimeError("np hardware fault")

        monkeypatch.setitem(fs._RUNNERS, "greedy", boom)
        d = planted_search_dataset(0, n_features=4, n_rows=60)
        with pytest.raises(GridCellError) as exc:
            run_all_methods(d, methods=("greedy",))
        assert exc.value.method == "greedy"
        assert exc.value.dataset_tag == "ALL"


class TestConsensus:
    def _toy_grid(self):
        d = planted_search_dataset(8, n_features=5, n_rows=80)
        return run_all_methods(d, methods=("greedy", "rank_info_gain", "best_first"),
                               config=SearchConfig(seed=2))

    def test_vote_arithmetic(self):
        grid = self._toy_grid()
        report = aggregate_consensus(grid, vote_threshold=2, n_features=5)
        for tag in GRID_TAGS:
            counts = {}
            for m in grid.methods:
                for f in grid.cells[(m, tag)].features:
                    counts[f] = counts.get(f, 0) + 1
            assert report.votes[tag] == counts
            assert report.consensus[tag] == tuple(
                sorted(f for f, v in counts.items() if v >= 2))

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            aggregate_consensus(self._toy_grid(), vote_threshold=0)

    def test_algorithm_rank_counts_methods(self):
        grid = self._toy_grid()
        report = aggregate_consensus(grid, vote_threshold=2, n_features=5)
        rank = report.algorithm_rank()
        scores = dict(rank.entries)
        for f in range(1, 6):
            want = sum(f in grid.method_union(m) for m in grid.methods)
            assert scores[f] == want

    def test_class_importance_sums_votes(self):
        grid = self._toy_grid()
        report = aggregate_consensus(grid, vote_threshold=2, n_features=5)
        scores = dict(report.class_importance_rank().entries)
        for f in range(1, 6):
            want = sum(report.votes[tag].get(f, 0) for tag in GRID_TAGS)
            assert scores[f] == want


class TestReferenceTables:
    def test_reference_grid_shape(self):
        grid = reference_grid()
        assert grid.methods == METHOD_ORDER
        assert grid.tags == GRID_TAGS
        assert all(len(c.features) > 0 for c in grid.cells.values())

    def test_consensus_from_reference_grid(self):
        # hand-counted 4-of-7 votes over the bundled per-method tables
        report = aggregate_consensus(reference_grid(), vote_threshold=4,
                                     n_features=41)
        assert report.consensus["ALL"] == (3, 4, 5, 6, 8, 9, 10, 12, 14, 25,
                                           29, 30, 32, 37, 38, 39)
        assert report.consensus["R2L"] == (5, 9, 10, 16, 22, 26, 39)
        assert report.consensus["U2R"] == (1, 11, 14, 17, 18, 29, 39)

    def test_start_set_from_reference_tables(self):
        report = aggregate_consensus(reference_grid(), vote_threshold=4,
                                     n_features=41)
        fs, trail = build_start_set(report, min_class_rows=4, min_algo_votes=5)
        assert fs.ordered() == (5, 29, 39)
        assert trail == [{"min_class_rows": 4, "min_algo_votes": 5,
                          "candidates": 3}]

    def test_bundled_final_set(self):
        ref = load_reference_selections()
        assert ref["final_set"] == (1, 3, 4, 5, 6, 10, 14, 23, 25, 30, 35)
        assert set(ref["consensus"]) == set(GRID_TAGS)

    def test_jaccard_basics(self):
        assert jaccard((), ()) == 1.0
        assert jaccard((1, 2), ()) == 0.0
        assert jaccard((1, 2, 3), (2, 3, 4)) == pytest.approx(0.5)
        assert jaccard((1, 2), (1, 2)) == 1.0

    def test_similarity_report_on_reference_grid_is_perfect(self):
        grid = reference_grid()
        report = aggregate_consensus(grid, vote_threshold=4, n_features=41)
        ref = load_reference_selections()
        doc = similarity_report(grid, report, ref["final_set"])
        assert doc["per_method_mean"] == pytest.approx(1.0)
        assert all(v == 1.0 for row in doc["per_method"].values()
                   for v in row.values())
        assert doc["final_set"]["jaccard"] == 1.0
        # consensus rows are curated separately, so they need not be 1.0
        assert set(doc["consensus"]) == set(GRID_TAGS)
