"""Command line front end.

Subcommands mirror the pipeline stages; every run leaves a manifest in the
artifact directory, so a partial run is still inspectable. Exit codes:
0 success, 2 bad usage or invalid inputs, 1 failure during a stage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

from . import __version__
from .config import PipelineConfig
from .featsel import METHOD_ORDER, similarity_report
from .reports import ArtifactWriter
from .runner import (
    ASSUMPTIONS,
    full_model_spec,
    make_full_evaluator,
    run_pipeline,
    stage_compare,
    stage_evaluate,
    stage_prep,
    stage_search,
    stage_select,
)
from .schema import kdd_schema

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid flags or inputs detected before any stage runs."""


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kddfeatsel",
        description="Feature selection pipeline for KDD-format intrusion data.",
        epilog="The artifact directory defaults to $KDDFS_OUT_DIR, then ./out.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", metavar="FILE",
                        help="training data, 41 comma-separated features plus label "
                             "per line (.gz accepted)")
    common.add_argument("--out", metavar="DIR", help="artifact directory")
    common.add_argument("--config", metavar="FILE",
                        help="JSON run config; explicit flags override its values")
    common.add_argument("--seed", type=int, help="master seed (default 42)")
    common.add_argument("--jobs", type=int,
                        help="parallel workers for folds and search (default 1)")
    common.add_argument("--no-dedup", action="store_true",
                        help="keep duplicate records instead of dropping them")

    search_flags = argparse.ArgumentParser(add_help=False)
    search_flags.add_argument("--methods", metavar="LIST",
                              help="comma list of search methods (default: all seven)")
    search_flags.add_argument("--vote-threshold", type=int, metavar="N",
                              help="methods that must agree for consensus (default 4)")

    select_flags = argparse.ArgumentParser(add_help=False)
    select_flags.add_argument("--strategy", choices=("add", "delete", "both"),
                              help="which selection phase to run (default both)")
    select_flags.add_argument("--start-set", metavar="LIST",
                              help="comma list of feature ids to grow from, "
                                   "overriding the consensus start set")
    select_flags.add_argument("--epsilon", type=float, metavar="E",
                              help="tolerated accuracy/detection drop (default 0.001)")
    select_flags.add_argument("--tail-q", type=int, metavar="Q",
                              help="low-importance tail size for reduction (default 10)")
    select_flags.add_argument("--no-compare", action="store_true",
                              help="skip the classifier comparison; use the stock "
                                   "boosted forest unless the config names a model")
    select_flags.add_argument("--k", type=int, metavar="K",
                              help="folds for the final cross-validation (default 10)")
    select_flags.add_argument("--loop-k", type=int, metavar="K",
                              help="folds inside the selection loop (default 10)")

    sub.add_parser("prep", parents=[common],
                   help="parse and deduplicate the data, write stats.json")
    sub.add_parser("search", parents=[common, search_flags],
                   help="run all subset searches, write the grid and consensus")
    sub.add_parser("select", parents=[common, search_flags, select_flags],
                   help="search plus guarded selection of the final feature set")
    ev = sub.add_parser("evaluate", parents=[common],
                        help="cross-validate a feature set against all features")
    ev.add_argument("--features", metavar="LIST", required=True,
                    help="comma list of feature ids to evaluate")
    ev.add_argument("--k", type=int, metavar="K",
                    help="folds for the cross-validation (default 10)")
    sub.add_parser("pipeline", parents=[common, search_flags, select_flags],
                   help="the whole run: prep, compare, search, select, evaluate")
    return p


def _int_list(text: str, what: str) -> tuple:
    toks = [t.strip() for t in text.split(",") if t.strip()]
    if not toks:
        raise UsageError(f"{what} must name at least one feature")
    try:
        ids = tuple(int(t) for t in toks)
    except ValueError:
        raise UsageError(f"{what} must be a comma list of integers, got {text!r}")
    n = kdd_schema().n_features
    bad = sorted(f for f in ids if not 1 <= f <= n)
    if bad:
        raise UsageError(f"{what} contains ids outside 1..{n}: "
                         f"{', '.join(map(str, bad))}")
    if len(set(ids)) != len(ids):
        raise UsageError(f"{what} repeats a feature id")
    return ids


def _assemble_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is not None:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        try:
            cfg = PipelineConfig.from_file(args.config)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
            raise UsageError(f"bad config file {args.config}: {e}")
    else:
        cfg = PipelineConfig()

    over = {}
    if args.input is not None:
        over["train_path"] = args.input
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.no_dedup:
        over["dedup"] = False

    methods = getattr(args, "methods", None)
    if methods is not None:
        names = tuple(t.strip() for t in methods.split(",") if t.strip())
        unknown = sorted(set(names) - set(METHOD_ORDER))
        if not names or unknown:
            raise UsageError("unknown search methods: "
                             f"{', '.join(unknown) or '(none given)'}; "
                             f"choose from {', '.join(METHOD_ORDER)}")
        over["methods"] = names
    vote = getattr(args, "vote_threshold", None)
    if vote is not None:
        if vote < 1:
            raise UsageError("--vote-threshold must be at least 1")
        over["vote_threshold"] = vote
    if getattr(args, "strategy", None) is not None:
        over["strategy"] = args.strategy
    start = getattr(args, "start_set", None)
    if start is not None:
        over["start_set"] = _int_list(start, "--start-set")
    eps = getattr(args, "epsilon", None)
    if eps is not None:
        if eps < 0:
            raise UsageError("--epsilon must be non-negative")
        over["guard_epsilon"] = eps
    tail = getattr(args, "tail_q", None)
    if tail is not None:
        if tail < 0:
            raise UsageError("--tail-q must be non-negative")
        over["tail_q"] = tail
    if getattr(args, "no_compare", False):
        over["compare"] = False
    k = getattr(args, "k", None)
    if k is not None:
        if k < 2:
            raise UsageError("--k must be at least 2")
        over["cv_k"] = k
    loop_k = getattr(args, "loop_k", None)
    if loop_k is not None:
        if loop_k < 2:
            raise UsageError("--loop-k must be at least 2")
        over["loop_cv_k"] = loop_k

    try:
        cfg = dataclasses.replace(cfg, **over)
    except ValueError as e:
        raise UsageError(str(e))
    if not cfg.train_path:
        raise UsageError("an input file is required (--input or train_path in --config)")
    if not os.path.isfile(cfg.train_path):
        raise UsageError(f"input file not found: {cfg.train_path}")
    return cfg


def _out_dir(args: argparse.Namespace) -> str:
    return args.out or os.environ.get("KDDFS_OUT_DIR") or "out"


def _execute(cfg: PipelineConfig, out: str, body) -> int:
    """Run a stage body with manifest/timings bookkeeping mirroring run_pipeline."""
    writer = ArtifactWriter(out)
    timings = {}
    t0 = time.perf_counter()
    try:
        body(writer, timings)
    finally:
        timings["total_seconds"] = time.perf_counter() - t0
        writer.write_sidecar("timings.json", timings)
        writer.write_manifest(cfg.config_hash(), cfg.seed, ASSUMPTIONS)
    print(f"artifacts: {writer.out_dir}")
    return EXIT_OK


def _prep_verbose(cfg: PipelineConfig, writer, timings):
    d = stage_prep(cfg, writer, timings)
    if cfg.dedup:
        print(f"data: {d.n_records} records after deduplication")
    else:
        print(f"data: {d.n_records} records (duplicates kept)")
    return d


def _cmd_prep(cfg, out, args):
    return _execute(cfg, out, lambda w, t: _prep_verbose(cfg, w, t))


def _cmd_search(cfg, out, args):
    def body(writer, timings):
        d = _prep_verbose(cfg, writer, timings)
        grid, consensus = stage_search(cfg, d, writer, timings)
        writer.write_json("similarity.json", similarity_report(grid, consensus))
        for tag in consensus.tags:
            feats = ",".join(str(f) for f in consensus.consensus[tag])
            print(f"consensus[{tag}]: {feats or '(none)'}")
    return _execute(cfg, out, body)


def _cmd_select(cfg, out, args):
    def body(writer, timings):
        d = _prep_verbose(cfg, writer, timings)
        winner = None
        if cfg.compare and cfg.model is None:
            winner = stage_compare(cfg, d, writer, timings)
            print(f"classifier comparison winner: boosted {winner}")
        spec = full_model_spec(cfg, winner)
        full_eval = make_full_evaluator(cfg, d, spec)
        grid, consensus = stage_search(cfg, d, writer, timings)
        print("search grid complete")
        decision = stage_select(cfg, d, consensus, full_eval, writer, timings)
        writer.write_json("similarity.json", similarity_report(
            grid, consensus, decision.chosen.ordered()))
        for w in decision.warnings:
            print(f"warning: {w}", file=sys.stderr)
        feats = ",".join(str(f) for f in decision.chosen.ordered())
        print(f"selected features ({decision.source} phase): {feats}")
    return _execute(cfg, out, body)


def _cmd_evaluate(cfg, out, args):
    features = _int_list(args.features, "--features")

    def body(writer, timings):
        d = _prep_verbose(cfg, writer, timings)
        full_eval = make_full_evaluator(cfg, d, full_model_spec(cfg))
        doc = stage_evaluate(cfg, d, features, full_eval, writer, timings)
        print(f"accuracy with {len(features)} features: "
              f"{doc['best']['accuracy_mean']:.4f}")
        print(f"accuracy with all features:  {doc['full']['accuracy_mean']:.4f}")
    return _execute(cfg, out, body)


def _cmd_pipeline(cfg, out, args):
    res = run_pipeline(cfg, out)
    feats = ",".join(str(f) for f in res["final_features"])
    print(f"final features ({res['source']} phase): {feats}")
    print(f"cross-validated accuracy: {res['accuracy']:.4f}")
    print(f"artifacts: {res['out_dir']}")
    return EXIT_OK


_COMMANDS = {
    "prep": _cmd_prep,
    "search": _cmd_search,
    "select": _cmd_select,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits on --help/--version/usage errors
        return int(e.code or 0)
    try:
        cfg = _assemble_config(args)
        out = _out_dir(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](cfg, out, args)
    except UsageError as e:  # command-specific flags parsed before stages run
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
