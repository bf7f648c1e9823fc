"""Run configuration, canonical JSON, atomic artifact writes.

One config plus one seed fully determines every canonical artifact byte.
Wall-clock measurements never land in canonical artifacts; they go to the
timings sidecar, which the manifest lists but does not digest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

from .featsel import METHOD_ORDER

CONFIG_VERSION = 1

DEFAULT_MODEL = {
    "kind": "adaboost",
    "params": {"rounds": 10, "base_kind": "forest", "base_params": {"n_trees": 100}},
}

DEFAULT_LOOP_MODEL = {
    "kind": "adaboost",
    "params": {"rounds": 5, "base_kind": "forest", "base_params": {"n_trees": 25}},
}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a full run needs; serializable and hashable byte-for-byte."""

    seed: int = 42
    train_path: str | None = None
    dedup: bool = True
    methods: tuple = METHOD_ORDER
    vote_threshold: int = 4
    min_class_rows: int = 4
    min_algo_votes: int = 5
    guard_epsilon: float = 0.001
    tail_q: int = 10
    cv_k: int = 10
    loop_cv_k: int = 10
    model: dict | None = None        # None: the classifier-compare stage decides
    compare: bool = True             # run the classifier-comparison stage
    strategy: str = "both"           # selection phases to run: add | delete | both
    loop_model: dict = field(default_factory=lambda: dict(DEFAULT_LOOP_MODEL))
    search: dict = field(default_factory=dict)   # SearchConfig field overrides
    start_set: tuple | None = None   # explicit Gradually-ADD start set
    jobs: int = 1

    def __post_init__(self):
        if self.strategy not in ("add", "delete", "both"):
            raise ValueError("strategy must be one of add, delete, both")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["methods"] = list(self.methods)
        doc["start_set"] = list(self.start_set) if self.start_set is not None else None
        doc["config_version"] = CONFIG_VERSION
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        doc.pop("config_version", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "methods" in doc and doc["methods"] is not None:
            doc["methods"] = tuple(doc["methods"])
        if doc.get("start_set") is not None:
            doc["start_set"] = tuple(int(f) for f in doc["start_set"])
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
