"""Artifact writers.

An ArtifactWriter owns one output directory, serializes canonically
(sorted keys, trailing newline), writes atomically, and remembers digests
so the closing manifest can link every canonical artifact to the config
hash and seed. Timing sidecars are listed in the manifest but carry no
digest, because wall-clock values differ run to run by nature.
"""

from __future__ import annotations

import io
import os

from . import __version__
from .config import atomic_write_text, canonical_json, sha256_text
from .evaluation import ConfusionMatrix, MetricsReport
from .featsel import DISPLAY_NAMES, ConsensusReport, SelectionGrid
from .schema import AttackClass

__all__ = ["ArtifactWriter", "grid_to_csv", "confusion_to_csv", "comparison_csv"]


class ArtifactWriter:
    def __init__(self, out_dir):
        self.out_dir = os.fspath(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.digests = {}
        self.sidecars = []

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_json(self, name: str, obj) -> str:
        text = canonical_json(obj)
        atomic_write_text(self.path(name), text)
        self.digests[name] = {"sha256": sha256_text(text), "bytes": len(text.encode("utf-8"))}
        return self.path(name)

    def write_text(self, name: str, text: str) -> str:
        atomic_write_text(self.path(name), text)
        self.digests[name] = {"sha256": sha256_text(text), "bytes": len(text.encode("utf-8"))}
        return self.path(name)

    def write_sidecar(self, name: str, obj) -> str:
        """Non-canonical artifact (timings); listed in the manifest, not digested."""
        atomic_write_text(self.path(name), canonical_json(obj))
        self.sidecars.append(name)
        return self.path(name)

    def write_manifest(self, config_hash: str, seed: int, assumptions=()) -> str:
        doc = {
            "tool_version": __version__,
            "config_hash": config_hash,
            "seed": seed,
            "artifacts": {name: dict(info) for name, info in sorted(self.digests.items())},
            "sidecars": sorted(self.sidecars),
            "assumptions": list(assumptions),
        }
        return self.write_json("manifest.json", doc)


def grid_to_csv(grid: SelectionGrid) -> str:
    """Method-by-dataset table: one row per cell plus a union row per method."""
    buf = io.StringIO()
    buf.write("method,dataset,features,merit,n_evaluations\n")
    for method in grid.methods:
        display = DISPLAY_NAMES.get(method, method)
        for tag in grid.tags:
            cell = grid.cells[(method, tag)]
            feats = " ".join(str(f) for f in cell.features)
            buf.write(f"{display},{tag},{feats},{cell.merit:.6f},{cell.n_evaluations}\n")
        union = " ".join(str(f) for f in grid.method_union(method))
        buf.write(f"{display},union,{union},,\n")
    return buf.getvalue()


def confusion_to_csv(cm: ConfusionMatrix) -> str:
    names = [AttackClass(c).name for c in cm.classes]
    buf = io.StringIO()
    buf.write("actual\\predicted," + ",".join(names) + "\n")
    for i, name in enumerate(names):
        row = ",".join(str(int(v)) for v in cm.counts[i])
        buf.write(f"{name},{row}\n")
    return buf.getvalue()


def comparison_csv(best: MetricsReport, full: MetricsReport,
                   best_label: str = "best_set", full_label: str = "full_set") -> str:
    """Per-class measure table for the two feature sets, plot-ready."""
    measures = ("tpr", "fpr", "specificity", "npv", "ppv", "f_measure", "mcc", "accuracy")
    buf = io.StringIO()
    buf.write(f"class,measure,{best_label},{full_label}\n")
    for c in best.classes:
        name = AttackClass(c).name
        b = best.per_class[c]
        f = full.per_class[c] if c in full.per_class else None
        for m in measures:
            fv = getattr(f, m) if f is not None else ""
            buf.write(f"{name},{m},{getattr(b, m)!r},{fv!r}\n")
    buf.write(f"OVERALL,accuracy,{best.accuracy!r},{full.accuracy!r}\n")
    return buf.getvalue()
