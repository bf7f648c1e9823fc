"""Weighted base learners and the boosted ensemble.

Everything here trains on a FeatureView (a feature-selected numeric matrix
plus encoding metadata) and predicts whole datasets, re-encoding symbolic
tokens through the vocabulary captured at fit time so models survive JSON
round-trips and unseen tokens at prediction time.

Learners: Gaussian/Laplace naive Bayes, a C4.5-flavored decision tree on
weighted gain ratio, a random forest over weighted bootstraps, and
AdaBoost.M1 stacked on any of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .rng import derive_seed
from .schema import ATTACK_CLASSES, SYMBOLIC
from .stats import entropy_from_counts

__all__ = [
    "FeatureView",
    "ModelSpec",
    "NaiveBayesModel",
    "TreeModel",
    "ForestModel",
    "BoostedModel",
    "EmptyEnsembleError",
    "train_model",
    "model_to_dict",
    "model_from_dict",
]

N_CLASSES = len(ATTACK_CLASSES)
VAR_FLOOR = 1e-9
LAPLACE_ALPHA = 1.0
BETA_FLOOR = 1e-10


class EmptyEnsembleError(RuntimeError):
    """Boosting discarded every base model."""


@dataclass
class FeatureView:
    """A dataset projected to chosen features, with re-encoding metadata."""

    feature_ids: tuple
    kinds: tuple
    vocabs: dict          # column position in the view -> tuple of tokens
    X: np.ndarray
    y: np.ndarray

    @classmethod
    def build(cls, d: Dataset, features) -> "FeatureView":
        ids = d.schema.validate_feature_ids(features)
        if not ids:
            raise ValueError("a model needs at least one feature")
        kinds = tuple(d.schema.feature(f).kind for f in ids)
        vocabs = {j: d.sym_vocabs[f - 1] for j, f in enumerate(ids)
                  if d.schema.feature(f).kind == SYMBOLIC}
        X = np.ascontiguousarray(d.values[:, [f - 1 for f in ids]])
        return cls(feature_ids=ids, kinds=kinds, vocabs=vocabs, X=X,
                   y=d.classes.astype(np.int64))

    def encode(self, d: Dataset) -> np.ndarray:
        """Project another dataset onto this view; unseen tokens become -1."""
        n = d.n_records
        X = np.empty((n, len(self.feature_ids)), dtype=np.float64)
        for j, fid in enumerate(self.feature_ids):
            col = d.values[:, fid - 1]
            if self.kinds[j] == SYMBOLIC:
                index = {tok: i for i, tok in enumerate(self.vocabs[j])}
                src = d.sym_vocabs[fid - 1]
                lut = np.asarray([index.get(tok, -1) for tok in src], dtype=np.float64)
                X[:, j] = lut[col.astype(np.intp)] if len(src) else -1.0
            else:
                X[:, j] = col
        return X

    def meta_dict(self) -> dict:
        return {
            "feature_ids": list(self.feature_ids),
            "kinds": list(self.kinds),
            "vocabs": {str(j): list(v) for j, v in self.vocabs.items()},
        }

    @classmethod
    def meta_from_dict(cls, doc: dict) -> "FeatureView":
        return cls(feature_ids=tuple(doc["feature_ids"]), kinds=tuple(doc["kinds"]),
                   vocabs={int(j): tuple(v) for j, v in doc["vocabs"].items()},
                   X=np.zeros((0, len(doc["feature_ids"]))), y=np.zeros(0, dtype=np.int64))


def _normalized_weights(n: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("weights must align with the record count")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    tot = w.sum()
    if tot <= 0:
        raise ValueError("weights must not all be zero")
    return w / tot


# -- naive Bayes -------------------------------------------------------------


class NaiveBayesModel:
    """Gaussian likelihoods for numeric columns, Laplace counts for symbolic."""

    kind = "naive_bayes"

    def __init__(self, view_meta: FeatureView, classes, log_prior, numeric, symbolic):
        self.view_meta = view_meta
        self.classes = classes            # present class codes, ascending
        self.log_prior = log_prior        # (C,)
        self.numeric = numeric            # {col -> (means (C,), vars (C,))}
        self.symbolic = symbolic          # {col -> log_lik (C, V+1)}

    @classmethod
    def fit(cls, view: FeatureView, weights=None, seed=0) -> "NaiveBayesModel":
        n = len(view.y)
        w = _normalized_weights(n, weights)
        classes = np.unique(view.y)
        class_w = np.asarray([w[view.y == c].sum() for c in classes])
        if (class_w == 0).any():
            bad = int(classes[int(np.argmin(class_w))])
            raise ValueError(f"class {bad} present but carries zero total weight")
        log_prior = np.log(class_w)
        numeric = {}
        symbolic = {}
        for j, kind in enumerate(view.kinds):
            col = view.X[:, j]
            if kind == SYMBOLIC:
                v_size = len(view.vocabs[j])
                lik = np.empty((len(classes), v_size + 1))
                denom_extra = LAPLACE_ALPHA * (v_size + 1)
                for ci, c in enumerate(classes):
                    sel = view.y == c
                    counts = np.bincount(col[sel].astype(np.intp), weights=w[sel],
                                         minlength=v_size)
                    lik[ci, :v_size] = counts + LAPLACE_ALPHA
                    lik[ci, v_size] = LAPLACE_ALPHA
                    lik[ci] /= class_w[ci] + denom_extra
                symbolic[j] = np.log(lik)
            else:
                means = np.empty(len(classes))
                variances = np.empty(len(classes))
                for ci, c in enumerate(classes):
                    sel = view.y == c
                    wc = w[sel] / class_w[ci]
                    mu = float((wc * col[sel]).sum())
                    var = float((wc * (col[sel] - mu) ** 2).sum())
                    means[ci] = mu
                    variances[ci] = max(var, VAR_FLOOR)
                numeric[j] = (means, variances)
        return cls(view, classes, log_prior, numeric, symbolic)

    def predict_X(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        scores = np.tile(self.log_prior, (n, 1))
        for j, (means, variances) in self.numeric.items():
            x = X[:, j][:, None]
            scores += -0.5 * (np.log(2.0 * np.pi * variances)
                              + (x - means) ** 2 / variances)
        for j, log_lik in self.symbolic.items():
            codes = X[:, j].astype(np.intp)
            v_size = log_lik.shape[1] - 1
            codes = np.where((codes < 0) | (codes >= v_size), v_size, codes)
            scores += log_lik[:, codes].T
        return self.classes[np.argmax(scores, axis=1)]

    def predict(self, d: Dataset) -> np.ndarray:
        return self.predict_X(self.view_meta.encode(d))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "view": self.view_meta.meta_dict(),
            "classes": [int(c) for c in self.classes],
            "log_prior": self.log_prior.tolist(),
            "numeric": {str(j): {"means": m.tolist(), "vars": v.tolist()}
                        for j, (m, v) in self.numeric.items()},
            "symbolic": {str(j): ll.tolist() for j, ll in self.symbolic.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NaiveBayesModel":
        numeric = {int(j): (np.asarray(d["means"]), np.asarray(d["vars"]))
                   for j, d in doc["numeric"].items()}
        symbolic = {int(j): np.asarray(ll) for j, ll in doc["symbolic"].items()}
        return cls(FeatureView.meta_from_dict(doc["view"]), np.asarray(doc["classes"]),
                   np.asarray(doc["log_prior"]), numeric, symbolic)


# -- decision tree -------------------------------------------------------------


def _weighted_entropy_rows(counts: np.ndarray) -> np.ndarray:
    c = np.sort(counts, axis=1)
    tot = c.sum(axis=1, keepdims=True)
    safe = np.where(tot == 0, 1.0, tot)
    p = c / safe
    terms = np.where(c > 0, p * np.log2(np.where(c > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


class TreeModel:
    """Top-down induction on weighted gain ratio.

    Numeric splits are binary at midpoints between adjacent distinct values;
    symbolic splits branch on every observed token. Any impure node with a
    valid candidate split gets split, so realizable concepts like XOR are
    learned exactly; min_leaf and max_depth bound the growth.
    """

    kind = "tree"

    def __init__(self, view_meta: FeatureView, root: dict):
        self.view_meta = view_meta
        self.root = root

    @classmethod
    def fit(cls, view: FeatureView, weights=None, seed=0, max_depth=None,
            min_leaf: int = 2, m_try=None, rng=None) -> "TreeModel":
        n = len(view.y)
        w = _normalized_weights(n, weights)
        if rng is None:
            rng = np.random.default_rng(derive_seed(seed, "tree"))
        m = view.X.shape[1]
        m_try = m if m_try is None else max(1, min(int(m_try), m))
        builder = _TreeBuilder(view, w, max_depth, min_leaf, m_try, rng)
        root = builder.build(np.arange(n), 0)
        return cls(view, root)

    def predict_X(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if node["leaf"]:
                out[idx] = node["class"]
                continue
            col = X[idx, node["feature"]]
            if node["split"] == "num":
                left = col <= node["threshold"]
                stack.append((node["lo"], idx[left]))
                stack.append((node["hi"], idx[~left]))
            else:
                codes = col.astype(np.int64)
                matched = np.zeros(idx.size, dtype=bool)
                for code_str, child in node["children"].items():
                    sel = codes == int(code_str)
                    matched |= sel
                    stack.append((child, idx[sel]))
                if not matched.all():
                    default = node["children"][str(node["default"])]
                    stack.append((default, idx[~matched]))
        return out

    def predict(self, d: Dataset) -> np.ndarray:
        return self.predict_X(self.view_meta.encode(d))

    def depth(self) -> int:
        def walk(node):
            if node["leaf"]:
                return 0
            if node["split"] == "num":
                return 1 + max(walk(node["lo"]), walk(node["hi"]))
            return 1 + max(walk(c) for c in node["children"].values())
        return walk(self.root)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "view": self.view_meta.meta_dict(), "root": self.root}

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeModel":
        return cls(FeatureView.meta_from_dict(doc["view"]), doc["root"])


class _TreeBuilder:
    def __init__(self, view: FeatureView, w: np.ndarray, max_depth, min_leaf, m_try, rng):
        self.X = view.X
        self.y = view.y
        self.kinds = view.kinds
        self.vocabs = view.vocabs
        self.w = w
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.m_try = m_try
        self.rng = rng

    def build(self, idx: np.ndarray, depth: int) -> dict:
        y = self.y[idx]
        counts = np.bincount(y, weights=self.w[idx], minlength=N_CLASSES)
        leaf = {"leaf": True, "class": int(np.argmax(counts)), "dist": counts.tolist()}
        if (idx.size < 2 * self.min_leaf
                or (self.max_depth is not None and depth >= self.max_depth)
                or np.count_nonzero(np.bincount(y)) <= 1):
            return leaf
        m = self.X.shape[1]
        # sampled order; inspection continues past m_try features until some
        # valid split is found, so a node never dies on an unlucky draw
        order = self.rng.permutation(m) if self.m_try < m else np.arange(m)
        node_entropy = entropy_from_counts(counts)
        best = None  # (gain_ratio, pos, descriptor)
        for inspected, pos in enumerate(order, start=1):
            found = (self._eval_symbolic(idx, int(pos), y, node_entropy)
                     if self.kinds[pos] == SYMBOLIC
                     else self._eval_numeric(idx, int(pos), y, node_entropy))
            if found is not None and (best is None or found[0] > best[0]):
                best = found
            if inspected >= self.m_try and best is not None:
                break
        if best is None:
            return leaf
        _, pos, desc = best
        if desc["split"] == "num":
            col = self.X[idx, pos]
            left = col <= desc["threshold"]
            return {"leaf": False, "feature": pos, "split": "num",
                    "threshold": desc["threshold"],
                    "lo": self.build(idx[left], depth + 1),
                    "hi": self.build(idx[~left], depth + 1)}
        codes = self.X[idx, pos].astype(np.int64)
        children = {}
        weight_by_code = {}
        for code in np.unique(codes):
            sel = codes == code
            children[str(int(code))] = self.build(idx[sel], depth + 1)
            weight_by_code[int(code)] = float(self.w[idx][sel].sum())
        default = min(weight_by_code, key=lambda c: (-weight_by_code[c], c))
        return {"leaf": False, "feature": pos, "split": "sym",
                "children": children, "default": int(default)}

    def _eval_numeric(self, idx, pos, y, node_entropy):
        x = self.X[idx, pos]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y[order]
        ws = self.w[idx][order]
        n = xs.size
        cw = np.zeros((n, N_CLASSES))
        cw[np.arange(n), ys] = ws
        pref = np.cumsum(cw, axis=0)
        total = pref[-1]
        w_total = total.sum()
        cut = np.flatnonzero(xs[1:] != xs[:-1]) + 1
        cut = cut[(cut >= self.min_leaf) & (n - cut >= self.min_leaf)]
        if cut.size == 0:
            return None
        left = pref[cut - 1]
        right = total - left
        wl = left.sum(axis=1)
        wr = right.sum(axis=1)
        hl = _weighted_entropy_rows(left)
        hr = _weighted_entropy_rows(right)
        ig = node_entropy - (wl * hl + wr * hr) / w_total
        si = _weighted_entropy_rows(np.column_stack([wl, wr]))
        valid = si > 0
        if not valid.any():
            return None
        gr = np.where(valid, ig / np.where(valid, si, 1.0), -np.inf)
        b = int(np.argmax(gr))
        i = int(cut[b])
        thr = (xs[i - 1] + xs[i]) / 2.0
        if thr >= xs[i]:
            thr = float(xs[i - 1])  # midpoint rounded up; fall back to the left value
        return (float(gr[b]), pos, {"split": "num", "threshold": float(thr)})

    def _eval_symbolic(self, idx, pos, y, node_entropy):
        codes = self.X[idx, pos].astype(np.int64)
        v_size = max(len(self.vocabs[pos]), int(codes.max()) + 1 if codes.size else 1)
        rec_counts = np.bincount(codes, minlength=v_size)
        if (rec_counts >= self.min_leaf).sum() < 2:
            return None
        flat = np.bincount(codes * N_CLASSES + y, weights=self.w[idx],
                           minlength=v_size * N_CLASSES)
        wc = flat.reshape(v_size, N_CLASSES)
        present = rec_counts > 0
        if present.sum() < 2:
            return None
        w_total = wc.sum()
        wv = wc.sum(axis=1)
        hv = _weighted_entropy_rows(wc)
        ig = node_entropy - (wv[present] * hv[present]).sum() / w_total
        si = entropy_from_counts(wv[present])
        if si <= 0:
            return None
        return (float(ig / si), pos, {"split": "sym"})


# -- random forest -------------------------------------------------------------


class ForestModel:
    """Bagged trees on weighted bootstraps with per-node feature sampling."""

    kind = "forest"

    def __init__(self, view_meta: FeatureView, trees: list):
        self.view_meta = view_meta
        self.trees = trees

    @classmethod
    def fit(cls, view: FeatureView, weights=None, seed=0, n_trees: int = 100,
            m_try=None, bootstrap: bool = True, min_leaf: int = 2,
            max_depth=None, jobs: int = 1) -> "ForestModel":
        n = len(view.y)
        w = _normalized_weights(n, weights)
        m = view.X.shape[1]
        if m_try is None:
            m_try = max(1, int(math.floor(math.sqrt(m))))
        args = [(view, w, seed, t, n_trees, m_try, bootstrap, min_leaf, max_depth)
                for t in range(n_trees)]
        if jobs and jobs > 1:
            from joblib import Parallel, delayed
            trees = Parallel(n_jobs=jobs)(delayed(_fit_one_tree)(*a) for a in args)
        else:
            trees = [_fit_one_tree(*a) for a in args]
        return cls(view, list(trees))

    def predict_X(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, tree.predict_X(X)] += 1
        return np.argmax(votes, axis=1)

    def predict(self, d: Dataset) -> np.ndarray:
        return self.predict_X(self.view_meta.encode(d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "view": self.view_meta.meta_dict(),
                "trees": [t.root for t in self.trees]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        meta = FeatureView.meta_from_dict(doc["view"])
        return cls(meta, [TreeModel(meta, root) for root in doc["trees"]])


def _fit_one_tree(view: FeatureView, w, seed, t, n_trees, m_try, bootstrap,
                  min_leaf, max_depth) -> TreeModel:
    rng = np.random.default_rng(derive_seed(seed, "forest-tree", t))
    if bootstrap:
        n = len(view.y)
        idx = rng.choice(n, size=n, replace=True, p=w)
        sub = FeatureView(view.feature_ids, view.kinds, view.vocabs,
                          view.X[idx], view.y[idx])
        return TreeModel.fit(sub, weights=None, m_try=m_try, rng=rng,
                             min_leaf=min_leaf, max_depth=max_depth)
    return TreeModel.fit(view, weights=w, m_try=m_try, rng=rng,
                         min_leaf=min_leaf, max_depth=max_depth)


# -- AdaBoost.M1 ----------------------------------------------------------------


class BoostedModel:
    """AdaBoost.M1: reweight by beta = eps/(1-eps), vote by log(1/beta)."""

    kind = "adaboost"

    def __init__(self, view_meta: FeatureView, members: list, betas: list):
        self.view_meta = view_meta
        self.members = members
        self.betas = betas

    @classmethod
    def fit(cls, view: FeatureView, base_kind: str = "forest", base_params=None,
            rounds: int = 10, seed: int = 0, weights=None) -> "BoostedModel":
        base_params = dict(base_params or {})
        n = len(view.y)
        w = _normalized_weights(n, weights)
        members = []
        betas = []
        for t in range(rounds):
            model = _fit_base(base_kind, view, w, derive_seed(seed, "boost-round", t),
                              base_params)
            pred = model.predict_X(view.X)
            miss = pred != view.y
            eps = float(w[miss].sum())
            if eps >= 0.5:
                break
            if eps == 0.0:
                members.append(model)
                betas.append(BETA_FLOOR)
                break
            beta = eps / (1.0 - eps)
            members.append(model)
            betas.append(beta)
            w = np.where(miss, w, w * beta)
            w = w / w.sum()
        if not members:
            raise EmptyEnsembleError(
                "first base model had weighted error >= 0.5; nothing to ensemble")
        return cls(view, members, betas)

    def predict_X(self, X: np.ndarray) -> np.ndarray:
        scores = np.zeros((X.shape[0], N_CLASSES))
        rows = np.arange(X.shape[0])
        for model, beta in zip(self.members, self.betas):
            scores[rows, model.predict_X(X)] += math.log(1.0 / beta)
        return np.argmax(scores, axis=1)

    def predict(self, d: Dataset) -> np.ndarray:
        return self.predict_X(self.view_meta.encode(d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "view": self.view_meta.meta_dict(),
                "betas": list(self.betas),
                "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, doc: dict) -> "BoostedModel":
        meta = FeatureView.meta_from_dict(doc["view"])
        members = [model_from_dict(m) for m in doc["members"]]
        return cls(meta, members, [float(b) for b in doc["betas"]])


def _fit_base(kind: str, view: FeatureView, w: np.ndarray, seed, params: dict):
    if kind == "naive_bayes":
        return NaiveBayesModel.fit(view, weights=w, seed=seed)
    if kind == "tree":
        return TreeModel.fit(view, weights=w, seed=seed, **params)
    if kind == "forest":
        return ForestModel.fit(view, weights=w, seed=seed, **params)
    raise ValueError(f"unknown base learner kind {kind!r}")


# -- uniform entry points ---------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description used by CV, the pipeline and the CLI.

    kind: naive_bayes | tree | forest | adaboost. For adaboost, params may
    carry rounds plus base_kind/base_params for the boosted learner.
    """

    kind: str = "adaboost"
    params: dict = field(default_factory=dict)

    def with_params(self, **updates) -> "ModelSpec":
        merged = dict(self.params)
        merged.update(updates)
        return ModelSpec(kind=self.kind, params=merged)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(kind=doc["kind"], params=dict(doc.get("params", {})))


def train_model(spec: ModelSpec, d: Dataset, features, seed: int = 0, weights=None):
    """Train spec's model on a dataset restricted to the given features."""
    view = FeatureView.build(d, features)
    params = dict(spec.params)
    if spec.kind == "adaboost":
        return BoostedModel.fit(
            view,
            base_kind=params.pop("base_kind", "forest"),
            base_params=params.pop("base_params", {}),
            rounds=int(params.pop("rounds", 10)),
            seed=seed, weights=weights)
    if spec.kind == "naive_bayes":
        return NaiveBayesModel.fit(view, weights=weights, seed=seed)
    if spec.kind == "tree":
        return TreeModel.fit(view, weights=weights, seed=seed, **params)
    if spec.kind == "forest":
        return ForestModel.fit(view, weights=weights, seed=seed, **params)
    raise ValueError(f"unknown model kind {spec.kind!r}")


def model_to_dict(model) -> dict:
    doc = model.to_dict()
    doc["format_version"] = 1
    return doc


def model_from_dict(doc: dict):
    kinds = {
        "naive_bayes": NaiveBayesModel,
        "tree": TreeModel,
        "forest": ForestModel,
        "adaboost": BoostedModel,
    }
    try:
        cls = kinds[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc)
