"""Stage orchestration.

Each stage does one unit of work and records its artifacts through an
ArtifactWriter; run_pipeline chains them and closes with the timings sidecar
and the manifest. The CLI calls the stages directly, and a stage failure
leaves every artifact written so far intact on disk.
"""

from __future__ import annotations

import time

from .classifiers import EmptyEnsembleError, ModelSpec
from .config import DEFAULT_MODEL, PipelineConfig
from .dataset import Dataset, class_distribution, deduplicate, parse_kdd
from .evaluation import CVConfig, cross_validate, measure_build_seconds
from .featsel import (
    ConsensusReport,
    SearchConfig,
    aggregate_consensus,
    run_all_methods,
    similarity_report,
)
from .pipeline import (
    ADD_CLASS_ORDER,
    CvEvaluator,
    GuardPolicy,
    SelectionDecision,
    build_start_set,
    gradual_add,
    gradual_delete,
    reduce_features,
    select_best,
)
from .reports import ArtifactWriter, comparison_csv, confusion_to_csv, grid_to_csv
from .rng import derive_seed
from .schema import AttackClass

__all__ = [
    "stage_prep",
    "stage_compare",
    "stage_search",
    "stage_select",
    "stage_evaluate",
    "run_pipeline",
    "full_model_spec",
    "make_full_evaluator",
    "COMPARE_BASES",
]

COMPARE_BASES = ("naive_bayes", "tree", "forest")

ASSUMPTIONS = (
    "numeric features are discretized by the entropy/MDL method before "
    "correlation-based subset evaluation",
    "feature-feature and feature-class correlation both use symmetric uncertainty",
    "cross-validation accuracy aggregates as the mean of fold accuracies; "
    "all other aggregate metrics come from the pooled confusion matrix",
)


def _stage_time(timings: dict, name: str, seconds: float) -> None:
    timings.setdefault("stage_seconds", {})[name] = seconds


def _search_config(cfg: PipelineConfig) -> SearchConfig:
    return SearchConfig(**{"seed": cfg.seed, **cfg.search})


def _loop_spec(cfg: PipelineConfig) -> ModelSpec:
    return ModelSpec.from_dict(cfg.loop_model)


def full_model_spec(cfg: PipelineConfig, compare_winner: str | None = None) -> ModelSpec:
    """The final-evaluation model: explicit config wins, then the compare
    winner boosted at full budget, then the stock boosted forest."""
    if cfg.model is not None:
        return ModelSpec.from_dict(cfg.model)
    base = compare_winner or "forest"
    params = {"rounds": DEFAULT_MODEL["params"]["rounds"], "base_kind": base,
              "base_params": dict(DEFAULT_MODEL["params"]["base_params"])
              if base == "forest" else {}}
    return ModelSpec(kind="adaboost", params=params)


def make_full_evaluator(cfg: PipelineConfig, d: Dataset, spec: ModelSpec) -> CvEvaluator:
    return CvEvaluator(d, spec, CVConfig(k=cfg.cv_k, seed=cfg.seed), jobs=cfg.jobs)


def stage_prep(cfg: PipelineConfig, writer: ArtifactWriter, timings: dict) -> Dataset:
    """Parse the training file, optionally deduplicate, write stats.json."""
    t0 = time.perf_counter()
    raw = parse_kdd(cfg.train_path)
    _stage_time(timings, "prep_parse", time.perf_counter() - t0)
    doc = {"source": cfg.train_path, "records": raw.n_records,
           "distribution_before": class_distribution(raw)}
    t0 = time.perf_counter()
    if cfg.dedup:
        d, stats = deduplicate(raw)
        doc["dedup"] = stats.to_dict()
        doc["records_after"] = d.n_records
        doc["distribution_after"] = class_distribution(d)
    else:
        d = raw
        doc["dedup"] = None
    _stage_time(timings, "prep_dedup", time.perf_counter() - t0)
    writer.write_json("stats.json", doc)
    return d


def stage_compare(cfg: PipelineConfig, d: Dataset, writer: ArtifactWriter,
                  timings: dict) -> str:
    """Cross-validate the boosted candidates under the loop budget.

    Winner by (mean accuracy, min class detection rate); returns its base
    kind so the final model can be built at full budget.
    """
    loop = _loop_spec(cfg)
    cv = CVConfig(k=cfg.loop_cv_k, seed=cfg.seed)
    features = tuple(range(1, d.schema.n_features + 1))
    rows = {}
    cv_seconds = {}
    for base in COMPARE_BASES:
        params = dict(loop.params)
        params["base_kind"] = base
        if base != "forest":
            params["base_params"] = {}
        spec = ModelSpec(kind="adaboost", params=params)
        t0 = time.perf_counter()
        try:
            res = cross_validate(d, features, spec, cv, jobs=cfg.jobs)
        except EmptyEnsembleError as e:  # a candidate that cannot ensemble loses
            cv_seconds[base] = time.perf_counter() - t0
            rows[base] = {"model": spec.to_dict(), "error": str(e)}
            continue
        cv_seconds[base] = time.perf_counter() - t0
        tpr = {AttackClass(c).name: res.report.per_class[c].tpr
               for c in res.report.classes}
        rows[base] = {"accuracy_mean": res.accuracy_mean,
                      "min_tpr": min(tpr.values()) if tpr else 0.0,
                      "tpr": tpr,
                      "model": spec.to_dict()}
    ok = sorted(b for b in rows if "error" not in rows[b])
    if not ok:
        raise RuntimeError("no boosted candidate could be ensembled on this data")
    winner = max(ok, key=lambda b: (rows[b]["accuracy_mean"], rows[b]["min_tpr"]))
    writer.write_json("classifier_compare.json", {"candidates": rows, "winner": winner})
    _stage_time(timings, "compare", sum(cv_seconds.values()))
    timings["compare_cv_seconds"] = cv_seconds
    return winner


def stage_search(cfg: PipelineConfig, d: Dataset, writer: ArtifactWriter,
                 timings: dict) -> tuple:
    """Grid plus consensus; writes grid.json/grid.csv/consensus.json."""
    t0 = time.perf_counter()
    grid = run_all_methods(d, cfg.methods, _search_config(cfg), jobs=cfg.jobs)
    _stage_time(timings, "search", time.perf_counter() - t0)
    timings["search_cell_seconds"] = {
        f"{m}/{tag}": grid.cells[(m, tag)].seconds
        for m in grid.methods for tag in grid.tags}
    consensus = aggregate_consensus(grid, cfg.vote_threshold,
                                    n_features=d.schema.n_features)
    writer.write_json("grid.json", grid.to_dict())
    writer.write_text("grid.csv", grid_to_csv(grid))
    writer.write_json("consensus.json", {
        **consensus.to_dict(),
        "algorithm_rank": [[f, s] for f, s in consensus.algorithm_rank().entries],
        "class_importance_rank": [[f, s] for f, s in
                                  consensus.class_importance_rank().entries],
    })
    return grid, consensus


def stage_select(cfg: PipelineConfig, d: Dataset, consensus: ConsensusReport,
                 full_evaluator: CvEvaluator, writer: ArtifactWriter,
                 timings: dict) -> SelectionDecision:
    """Guarded reduction plus the add/delete phases, then the final pick.

    A phase that dies forfeits the comparison with a warning instead of
    killing the run; the other phase's result still goes through.
    """
    guard = GuardPolicy(epsilon=cfg.guard_epsilon)
    loop_eval = CvEvaluator(d, _loop_spec(cfg),
                            CVConfig(k=cfg.loop_cv_k, seed=cfg.seed), jobs=cfg.jobs)
    do_add = cfg.strategy in ("add", "both")
    do_delete = cfg.strategy in ("delete", "both")
    warnings = []
    add_set = delete_set = reduced = None
    start = None

    if do_delete:
        t0 = time.perf_counter()
        try:
            reduced, reduce_trace = reduce_features(
                d, consensus.algorithm_rank(), consensus.class_importance_rank(),
                loop_eval, guard, tail_q=cfg.tail_q)
            writer.write_json("trace_reduce.json", reduce_trace.to_dict())
        except Exception as e:
            warnings.append(f"reduction aborted: {e}")
        _stage_time(timings, "select_reduce", time.perf_counter() - t0)
        if reduced is not None:
            t0 = time.perf_counter()
            try:
                delete_set, delete_trace = gradual_delete(
                    d, reduced.ordered(), loop_eval, guard)
                writer.write_json("trace_delete.json", delete_trace.to_dict())
            except Exception as e:
                warnings.append(f"gradual delete aborted: {e}")
            _stage_time(timings, "select_delete", time.perf_counter() - t0)

    if do_add:
        if cfg.start_set is not None:
            start = d.schema.validate_feature_ids(cfg.start_set)
            start_doc = {"features": list(start), "origin": "explicit override"}
        else:
            start_fs, trail = build_start_set(consensus, cfg.min_class_rows,
                                              cfg.min_algo_votes)
            start = start_fs.ordered()
            start_doc = {"features": list(start), "origin": "consensus thresholds",
                         "relaxation": trail}
        writer.write_json("start_set.json", start_doc)
        pools = {c.name: consensus.consensus.get(c.name, ()) for c in ADD_CLASS_ORDER}
        t0 = time.perf_counter()
        try:
            add_set, add_trace = gradual_add(d, start, pools, loop_eval, guard)
            writer.write_json("trace_add.json", add_trace.to_dict())
        except Exception as e:
            warnings.append(f"gradual add aborted: {e}")
        _stage_time(timings, "select_add", time.perf_counter() - t0)

    t0 = time.perf_counter()
    decision = select_best(full_evaluator, add_set, delete_set)
    _stage_time(timings, "select_decide", time.perf_counter() - t0)
    if warnings:
        decision = SelectionDecision(chosen=decision.chosen, source=decision.source,
                                     comparison=decision.comparison,
                                     warnings=decision.warnings + tuple(warnings))
    writer.write_json("final_set.json", {
        **decision.to_dict(),
        "strategy": cfg.strategy,
        "reduced_set": list(reduced.ordered()) if reduced is not None else None,
        "start_set": list(start) if start is not None else None,
    })
    writer.write_text("final_set.csv",
                      ",".join(str(f) for f in decision.chosen.ordered()) + "\n")
    return decision


def stage_evaluate(cfg: PipelineConfig, d: Dataset, features,
                   full_evaluator: CvEvaluator, writer: ArtifactWriter,
                   timings: dict) -> dict:
    """Final CV of the chosen set against the full feature set, paired folds."""
    features = d.schema.validate_feature_ids(features)
    all_features = tuple(range(1, d.schema.n_features + 1))
    t0 = time.perf_counter()
    _, best = full_evaluator.evaluate(features)
    _stage_time(timings, "evaluate_best", time.perf_counter() - t0)
    t0 = time.perf_counter()
    _, full = full_evaluator.evaluate(all_features)
    _stage_time(timings, "evaluate_full", time.perf_counter() - t0)

    spec = full_evaluator.spec
    timings["build_seconds"] = {
        "best_set": measure_build_seconds(spec, d, features,
                                          seed=derive_seed(cfg.seed, "build", "best")),
        "full_set": measure_build_seconds(spec, d, all_features,
                                          seed=derive_seed(cfg.seed, "build", "full")),
    }

    doc = {"features": list(features), "model": spec.to_dict(),
           "best": best.to_dict(), "full": full.to_dict()}
    probe = int(AttackClass.PROBE)
    if probe in best.pooled.classes:
        i = best.pooled.classes.index(probe)
        doc["probe_row"] = {AttackClass(c).name: int(best.pooled.counts[i, j])
                            for j, c in enumerate(best.pooled.classes)}
    writer.write_json("metrics.json", doc)
    writer.write_text("confusion_best.csv", confusion_to_csv(best.pooled))
    writer.write_text("confusion_full.csv", confusion_to_csv(full.pooled))
    writer.write_text("comparison.csv", comparison_csv(best.report, full.report))
    return doc


def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """All stages in order; always closes with the timings sidecar and manifest."""
    if not cfg.train_path:
        raise ValueError("config needs train_path")
    writer = ArtifactWriter(out_dir)
    timings = {}
    t_start = time.perf_counter()
    try:
        d = stage_prep(cfg, writer, timings)
        winner = None
        if cfg.compare and cfg.model is None:
            winner = stage_compare(cfg, d, writer, timings)
        spec = full_model_spec(cfg, winner)
        full_eval = make_full_evaluator(cfg, d, spec)
        grid, consensus = stage_search(cfg, d, writer, timings)
        decision = stage_select(cfg, d, consensus, full_eval, writer, timings)
        writer.write_json("similarity.json", similarity_report(
            grid, consensus, decision.chosen.ordered()))
        result = stage_evaluate(cfg, d, decision.chosen.ordered(), full_eval,
                                writer, timings)
    finally:
        timings["total_seconds"] = time.perf_counter() - t_start
        writer.write_sidecar("timings.json", timings)
        writer.write_manifest(cfg.config_hash(), cfg.seed, ASSUMPTIONS)
    return {"final_features": list(decision.chosen.ordered()),
            "source": decision.source,
            "accuracy": result["best"]["accuracy_mean"],
            "out_dir": writer.out_dir}
