"""Loading, deduplication and slicing of KDD'99-format connection data.

A Dataset is immutable and numpy-backed: continuous and binary columns are
stored as float64, symbolic columns as integer codes into per-column
vocabularies, labels as codes into a label vocabulary plus a per-record
attack class. Subsets share the parent's vocabularies, so feature codes
stay comparable across the class-based datasets carved from one source.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .schema import (
    ATTACK_CLASSES,
    AttackClass,
    Schema,
    UnknownLabelError,
    kdd_schema,
)

__all__ = [
    "Dataset",
    "Record",
    "Provenance",
    "ClassReduction",
    "DedupStats",
    "KddParseError",
    "UnknownLabelError",
    "parse_kdd",
    "deduplicate",
    "build_class_dataset",
    "build_pair_dataset",
    "class_distribution",
]


class KddParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


@dataclass(frozen=True)
class Provenance:
    source: str | None = None
    dedup_applied: bool = False
    scope: str = "ALL"

    def to_dict(self) -> dict:
        return {"source": self.source, "dedup_applied": self.dedup_applied, "scope": self.scope}


@dataclass(frozen=True)
class Record:
    """One decoded record: numbers for continuous/binary, tokens for symbolic."""

    values: tuple
    raw_label: str
    attack_class: AttackClass


@dataclass(frozen=True)
class ClassReduction:
    before: int
    after: int

    @property
    def reduction_pct(self) -> float:
        return 100.0 * (1.0 - self.after / self.before) if self.before else 0.0


@dataclass(frozen=True)
class DedupStats:
    per_class: dict
    total: ClassReduction

    def share_after_pct(self, c: AttackClass) -> float:
        if self.total.after == 0:
            return 0.0
        return 100.0 * self.per_class[c].after / self.total.after

    def to_dict(self) -> dict:
        out = {"per_class": {}, "total": {
            "before": self.total.before,
            "after": self.total.after,
            "reduction_pct": self.total.reduction_pct,
        }}
        for c in ATTACK_CLASSES:
            r = self.per_class[c]
            out["per_class"][c.name] = {
                "before": r.before,
                "after": r.after,
                "reduction_pct": r.reduction_pct,
                "share_after_pct": self.share_after_pct(c),
            }
        return out


class Dataset:
    """Immutable table of connection records.

    values: (n, k) float64; symbolic columns hold vocabulary codes.
    sym_vocabs: {0-based column -> tuple of tokens, sorted}.
    label_codes/label_vocab: raw label tokens, trailing period stripped.
    classes: per-record AttackClass values as uint8.
    """

    __slots__ = ("schema", "values", "sym_vocabs", "label_codes", "label_vocab",
                 "classes", "provenance")

    def __init__(self, schema: Schema, values: np.ndarray, sym_vocabs: dict,
                 label_codes: np.ndarray, label_vocab: tuple, classes: np.ndarray,
                 provenance: Provenance):
        n, k = values.shape
        if k != schema.n_features:
            raise ValueError(f"values has {k} columns, schema expects {schema.n_features}")
        if len(label_codes) != n or len(classes) != n:
            raise ValueError("row count mismatch between values and labels")
        for arr in (values, label_codes, classes):
            arr.setflags(write=False)
        self.schema = schema
        self.values = values
        self.sym_vocabs = sym_vocabs
        self.label_codes = label_codes
        self.label_vocab = label_vocab
        self.classes = classes
        self.provenance = provenance

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(cls, schema: Schema, rows, source: str | None = None) -> "Dataset":
        """Build from decoded rows: (sequence of 42 values..., ) pairs.

        Each row is (values, label_token) where values holds numbers for
        continuous/binary columns and tokens for symbolic ones.
        """
        k = schema.n_features
        n = len(rows)
        numeric_cols = {}
        sym_cols = {}
        for pos, meta in enumerate(schema.features):
            col = [r[0][pos] for r in rows]
            if meta.is_symbolic:
                sym_cols[pos] = np.asarray([str(v) for v in col], dtype=object)
            else:
                numeric_cols[pos] = np.asarray(col, dtype=np.float64)
        labels = np.asarray([str(r[1]) for r in rows], dtype=object)
        return _assemble(schema, n, k, numeric_cols, sym_cols, labels, Provenance(source=source))

    def _subset(self, keep: np.ndarray, provenance: Provenance) -> "Dataset":
        return Dataset(self.schema, np.ascontiguousarray(self.values[keep]),
                       self.sym_vocabs, np.ascontiguousarray(self.label_codes[keep]),
                       self.label_vocab, np.ascontiguousarray(self.classes[keep]), provenance)

    def take(self, indices) -> "Dataset":
        """Row selection by position; vocabularies are shared with the parent."""
        keep = np.asarray(indices, dtype=np.intp)
        return self._subset(keep, self.provenance)

    # -- access ------------------------------------------------------------

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    def feature_values(self, index: int) -> np.ndarray:
        """Raw column by 1-based feature index (codes for symbolic columns)."""
        self.schema.feature(index)
        return self.values[:, index - 1]

    def symbolic_vocab(self, index: int) -> tuple:
        meta = self.schema.feature(index)
        if not meta.is_symbolic:
            raise ValueError(f"feature {index} ({meta.name}) is not symbolic")
        return self.sym_vocabs[index - 1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=len(ATTACK_CLASSES)).astype(np.int64)

    def record(self, i: int) -> Record:
        vals = []
        for pos, meta in enumerate(self.schema.features):
            v = self.values[i, pos]
            vals.append(self.sym_vocabs[pos][int(v)] if meta.is_symbolic else float(v))
        return Record(values=tuple(vals), raw_label=self.label_vocab[int(self.label_codes[i])],
                      attack_class=AttackClass(int(self.classes[i])))

    def iter_records(self):
        for i in range(self.n_records):
            yield self.record(i)

    def __len__(self) -> int:
        return self.n_records

    def __eq__(self, other) -> bool:
        """Value equality on decoded content, ignoring provenance."""
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.schema.features != other.schema.features:
            return False
        if self.values.shape != other.values.shape:
            return False
        a_lab = np.asarray(self.label_vocab, dtype=object)[self.label_codes]
        b_lab = np.asarray(other.label_vocab, dtype=object)[other.label_codes]
        if not (a_lab == b_lab).all():
            return False
        for pos, meta in enumerate(self.schema.features):
            a = self.values[:, pos]
            b = other.values[:, pos]
            if meta.is_symbolic:
                av = np.asarray(self.sym_vocabs[pos], dtype=object)[a.astype(np.intp)]
                bv = np.asarray(other.sym_vocabs[pos], dtype=object)[b.astype(np.intp)]
                if not (av == bv).all():
                    return False
            elif not (a == b).all():
                return False
        return True

    def __hash__(self):  # pragma: no cover - identity hashing keeps sets usable
        return id(self)

    # -- serialization -----------------------------------------------------

    def to_kdd_csv(self, target) -> None:
        """Write records in the input format; labels have no trailing period."""
        own = isinstance(target, (str, os.PathLike))
        fh = open(target, "w", encoding="ascii") if own else target
        try:
            cols = []
            for pos, meta in enumerate(self.schema.features):
                col = self.values[:, pos]
                if meta.is_symbolic:
                    vocab = np.asarray(self.sym_vocabs[pos], dtype=object)
                    cols.append(vocab[col.astype(np.intp)])
                else:
                    cols.append(np.asarray([_fmt_num(v) for v in col], dtype=object))
            cols.append(np.asarray(self.label_vocab, dtype=object)[self.label_codes])
            for fields in zip(*cols):
                fh.write(",".join(fields))
                fh.write("\n")
        finally:
            if own:
                fh.close()


def _fmt_num(v: float) -> str:
    # integers print without a decimal point; everything else must round-trip
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


# -- parsing ---------------------------------------------------------------


def parse_kdd(source, schema: Schema | None = None) -> "Dataset":
    """Parse KDD-format CSV (41 feature fields + label) from a path or stream.

    Labels may carry a trailing period; it is stripped. Blank lines are
    skipped. Malformed lines raise KddParseError with the line number,
    unknown label tokens raise UnknownLabelError naming the token.
    """
    schema = schema or kdd_schema()
    src_name = str(source) if isinstance(source, (str, os.PathLike)) else None
    try:
        return _parse_fast(source, schema, src_name)
    except (KddParseError, UnknownLabelError):
        raise
    except Exception:
        # pandas rejected the input; rescan slowly for an exact diagnosis
        if src_name is not None:
            import gzip
            opener = gzip.open if src_name.endswith(".gz") else open
            return _parse_scan(opener(source, "rt", encoding="ascii", errors="replace"),
                               schema, src_name, close=True)
        if hasattr(source, "seek"):
            source.seek(0)
            return _parse_scan(source, schema, None, close=False)
        raise


def _parse_fast(source, schema: Schema, src_name: str | None) -> Dataset:
    k = schema.n_features
    dtype = {pos: str for pos in range(k) if schema.features[pos].is_symbolic}
    dtype[k] = str
    for pos in range(k):
        if pos not in dtype:
            dtype[pos] = np.float64
    try:
        frame = pd.read_csv(source, header=None, dtype=dtype, na_filter=False)
    except pd.errors.EmptyDataError:
        return _assemble(schema, 0, k, {}, {}, np.asarray([], dtype=object),
                         Provenance(source=src_name))
    if frame.shape[1] != k + 1:
        raise KddParseError(1, f"expected {k + 1} comma-separated fields, got {frame.shape[1]}")
    numeric_cols = {}
    sym_cols = {}
    for pos, meta in enumerate(schema.features):
        col = frame[pos].to_numpy()
        if meta.is_symbolic:
            sym_cols[pos] = col.astype(object)
        else:
            numeric_cols[pos] = col.astype(np.float64)
    labels = frame[k].to_numpy().astype(object)
    return _assemble(schema, len(frame), k, numeric_cols, sym_cols, labels,
                     Provenance(source=src_name))


def _parse_scan(fh, schema: Schema, src_name: str | None, close: bool) -> Dataset:
    k = schema.n_features
    metas = schema.features
    numeric_pos = [p for p in range(k) if not metas[p].is_symbolic]
    sym_pos = [p for p in range(k) if metas[p].is_symbolic]
    rows = []
    labels = []
    try:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            parts = s.split(",")
            if len(parts) != k + 1:
                raise KddParseError(line_no, f"expected {k + 1} comma-separated fields, "
                                             f"got {len(parts)}")
            for p in numeric_pos:
                try:
                    float(parts[p])
                except ValueError:
                    raise KddParseError(
                        line_no, f"field {p + 1} ({metas[p].name}): "
                                 f"not a number: {parts[p]!r}") from None
            tok = parts[k].rstrip(".")
            schema.map_attack_label(tok, line=line_no)
            rows.append(parts)
            labels.append(parts[k])
    finally:
        if close:
            fh.close()
    n = len(rows)
    numeric_cols = {p: np.asarray([float(r[p]) for r in rows], dtype=np.float64)
                    for p in numeric_pos}
    sym_cols = {p: np.asarray([r[p] for r in rows], dtype=object) for p in sym_pos}
    return _assemble(schema, n, k, numeric_cols, sym_cols,
                     np.asarray(labels, dtype=object), Provenance(source=src_name))


def _assemble(schema: Schema, n: int, k: int, numeric_cols: dict, sym_cols: dict,
              label_tokens: np.ndarray, provenance: Provenance) -> Dataset:
    values = np.empty((n, k), dtype=np.float64)
    sym_vocabs = {}
    for pos in range(k):
        if pos in sym_cols:
            vocab, codes = np.unique(sym_cols[pos], return_inverse=True) if n else \
                (np.asarray([], dtype=object), np.asarray([], dtype=np.intp))
            sym_vocabs[pos] = tuple(str(t) for t in vocab)
            values[:, pos] = codes
        elif n:
            values[:, pos] = numeric_cols[pos]
    stripped = np.asarray([str(t).rstrip(".") for t in label_tokens], dtype=object)
    if n:
        label_vocab_arr, label_codes = np.unique(stripped, return_inverse=True)
    else:
        label_vocab_arr = np.asarray([], dtype=object)
        label_codes = np.asarray([], dtype=np.intp)
    label_vocab = tuple(str(t) for t in label_vocab_arr)
    cls_of = np.empty(max(len(label_vocab), 1), dtype=np.uint8)
    for i, tok in enumerate(label_vocab):
        if tok not in schema.label_map:
            first = int(np.argmax(stripped == tok)) + 1
            raise UnknownLabelError(tok, line=first)
        cls_of[i] = int(schema.label_map[tok])
    classes = cls_of[label_codes] if n else np.asarray([], dtype=np.uint8)
    return Dataset(schema, values, sym_vocabs, label_codes.astype(np.int32),
                   label_vocab, classes.astype(np.uint8), provenance)


# -- operations --------------------------------------------------------------


def deduplicate(d: Dataset) -> tuple[Dataset, DedupStats]:
    """Drop exact repeats (all features plus label), keeping first occurrences.

    Order of survivors matches the input. Running it on an already
    deduplicated dataset returns an identical dataset with zero reduction.
    """
    before = d.class_counts()
    if d.n_records:
        key = np.column_stack([d.values + 0.0, d.label_codes.astype(np.float64)])
        key = np.ascontiguousarray(key)
        flat = key.view(np.dtype((np.void, key.dtype.itemsize * key.shape[1]))).ravel()
        _, first = np.unique(flat, return_index=True)
        keep = np.sort(first)
    else:
        keep = np.asarray([], dtype=np.intp)
    out = d._subset(keep, replace(d.provenance, dedup_applied=True))
    after = out.class_counts()
    per_class = {c: ClassReduction(int(before[c]), int(after[c])) for c in ATTACK_CLASSES}
    total = ClassReduction(int(before.sum()), int(after.sum()))
    return out, DedupStats(per_class=per_class, total=total)


def build_class_dataset(d: Dataset, c: AttackClass) -> Dataset:
    """Records of attack class c plus all NORMAL records, original order."""
    c = AttackClass(c)
    if c is AttackClass.NORMAL:
        raise ValueError("class dataset must be built for an attack class, not NORMAL")
    keep = np.flatnonzero((d.classes == int(c)) | (d.classes == int(AttackClass.NORMAL)))
    return d._subset(keep, replace(d.provenance, scope=f"{c.name}+NORMAL"))


def build_pair_dataset(d: Dataset) -> Dataset:
    """DOS plus PROBE records only (no NORMAL), original order."""
    keep = np.flatnonzero((d.classes == int(AttackClass.DOS)) |
                          (d.classes == int(AttackClass.PROBE)))
    return d._subset(keep, replace(d.provenance, scope="DOS+PROBE"))


def class_distribution(d: Dataset) -> dict:
    """Per-class record counts and percentage shares."""
    counts = d.class_counts()
    total = int(counts.sum())
    out = {}
    for c in ATTACK_CLASSES:
        n = int(counts[c])
        out[c.name] = {"count": n, "pct": (100.0 * n / total) if total else 0.0}
    return out
