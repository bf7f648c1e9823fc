"""Feature and label schema for KDD'99-format connection records.

A Schema describes the column layout (names, kinds, groups) and how raw
label tokens map onto the five traffic classes. The bundled kdd_schema()
covers the standard 41-feature layout; tests build smaller schemas for
synthetic data through Schema directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources

CONTINUOUS = "continuous"
SYMBOLIC = "symbolic"
BINARY = "binary"

GROUP_BASIC = "basic"
GROUP_CONTENT = "content"
GROUP_TIME_TRAFFIC = "time_traffic"
GROUP_HOST_TRAFFIC = "host_traffic"


class AttackClass(IntEnum):
    """Traffic classes, ordered so ties can break toward the lower value."""

    NORMAL = 0
    DOS = 1
    PROBE = 2
    R2L = 3
    U2R = 4

    @classmethod
    def from_name(cls, name: str) -> "AttackClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown attack class name: {name!r}") from None


ATTACK_CLASSES = tuple(AttackClass)
ATTACK_ONLY = tuple(c for c in AttackClass if c is not AttackClass.NORMAL)


@dataclass(frozen=True)
class FeatureMeta:
    """One column: 1-based index, name, value kind, feature group."""

    index: int
    name: str
    kind: str
    group: str

    @property
    def is_symbolic(self) -> bool:
        return self.kind == SYMBOLIC


class UnknownLabelError(ValueError):
    """A raw label token has no class mapping."""

    def __init__(self, token: str, line: int | None = None):
        self.token = token
        self.line = line
        where = f" (first seen on line {line})" if line is not None else ""
        super().__init__(f"unknown label token {token!r}{where}")


@dataclass(frozen=True)
class Schema:
    """Column layout plus the label-token to class map."""

    features: tuple[FeatureMeta, ...]
    label_map: dict[str, AttackClass]

    def __post_init__(self):
        for pos, meta in enumerate(self.features, start=1):
            if meta.index != pos:
                raise ValueError(
                    f"feature indices must be 1..{len(self.features)} in order, "
                    f"got {meta.index} at position {pos}"
                )
            if meta.kind not in (CONTINUOUS, SYMBOLIC, BINARY):
                raise ValueError(f"bad feature kind {meta.kind!r}")

    @property
    def n_features(self) -> int:
        return len(self.features)

    def feature(self, index: int) -> FeatureMeta:
        """Look up by 1-based index."""
        if not 1 <= index <= len(self.features):
            raise ValueError(f"feature index {index} out of range 1..{len(self.features)}")
        return self.features[index - 1]

    def symbolic_indices(self) -> tuple[int, ...]:
        return tuple(m.index for m in self.features if m.kind == SYMBOLIC)

    def validate_feature_ids(self, ids) -> tuple[int, ...]:
        """Check a collection of 1-based ids; returns them sorted ascending."""
        out = sorted(set(int(i) for i in ids))
        for i in out:
            if not 1 <= i <= self.n_features:
                raise ValueError(f"feature index {i} out of range 1..{self.n_features}")
        return tuple(out)

    def map_attack_label(self, token: str, line: int | None = None) -> AttackClass:
        """Map a raw label token (no trailing period) to its class."""
        try:
            return self.label_map[token]
        except KeyError:
            raise UnknownLabelError(token, line) from None


def _meta(index: int, name: str, kind: str, group: str) -> FeatureMeta:
    return FeatureMeta(index=index, name=name, kind=kind, group=group)


# The standard 41-column layout. Kinds: 2/3/4 carry string tokens, the
# four 0/1 flags are "binary" (numeric storage, categorical treatment).
KDD_FEATURES: tuple[FeatureMeta, ...] = (
    _meta(1, "duration", CONTINUOUS, GROUP_BASIC),
    _meta(2, "protocol_type", SYMBOLIC, GROUP_BASIC),
    _meta(3, "service", SYMBOLIC, GROUP_BASIC),
    _meta(4, "flag", SYMBOLIC, GROUP_BASIC),
    _meta(5, "src_bytes", CONTINUOUS, GROUP_BASIC),
    _meta(6, "dst_bytes", CONTINUOUS, GROUP_BASIC),
    _meta(7, "land", BINARY, GROUP_BASIC),
    _meta(8, "wrong_fragment", CONTINUOUS, GROUP_BASIC),
    _meta(9, "urgent", CONTINUOUS, GROUP_BASIC),
    _meta(10, "hot", CONTINUOUS, GROUP_CONTENT),
    _meta(11, "num_failed_logins", CONTINUOUS, GROUP_CONTENT),
    _meta(12, "logged_in", BINARY, GROUP_CONTENT),
    _meta(13, "num_compromised", CONTINUOUS, GROUP_CONTENT),
    _meta(14, "root_shell", CONTINUOUS, GROUP_CONTENT),
    _meta(15, "su_attempted", CONTINUOUS, GROUP_CONTENT),
    _meta(16, "num_root", CONTINUOUS, GROUP_CONTENT),
    _meta(17, "num_file_creations", CONTINUOUS, GROUP_CONTENT),
    _meta(18, "num_shells", CONTINUOUS, GROUP_CONTENT),
    _meta(19, "num_access_files", CONTINUOUS, GROUP_CONTENT),
    _meta(20, "num_outbound_cmds", CONTINUOUS, GROUP_CONTENT),
    _meta(21, "is_host_login", BINARY, GROUP_CONTENT),
    _meta(22, "is_guest_login", BINARY, GROUP_CONTENT),
    _meta(23, "count", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(24, "srv_count", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(25, "serror_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(26, "srv_serror_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(27, "rerror_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(28, "srv_rerror_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(29, "same_srv_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(30, "diff_srv_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(31, "srv_diff_host_rate", CONTINUOUS, GROUP_TIME_TRAFFIC),
    _meta(32, "dst_host_count", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(33, "dst_host_srv_count", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(34, "dst_host_same_srv_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(35, "dst_host_diff_srv_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(36, "dst_host_same_src_port_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(37, "dst_host_srv_diff_host_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(38, "dst_host_serror_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(39, "dst_host_srv_serror_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(40, "dst_host_rerror_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
    _meta(41, "dst_host_srv_rerror_rate", CONTINUOUS, GROUP_HOST_TRAFFIC),
)


def load_attack_map() -> dict[str, AttackClass]:
    """Versioned label-token map shipped with the package."""
    raw = resources.files("kddfeatsel.data").joinpath("attack_classes.json").read_text()
    doc = json.loads(raw)
    return {tok: AttackClass.from_name(cls) for tok, cls in doc["classes"].items()}


def kdd_schema() -> Schema:
    return Schema(features=KDD_FEATURES, label_map=load_attack_map())
