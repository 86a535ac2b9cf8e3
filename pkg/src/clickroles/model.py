"""Gradient-boosted tree classification of traffic roles.

Binary targets come from thresholding searchshare (above = search
dominated) or resistance (at or below = relay). The classifier is a
stagewise ensemble of axis-aligned regression trees fit to logistic-loss
gradients with Newton leaf values; split search is exact greedy over
sorted unique feature values, tie-broken toward the lowest feature index
and threshold so parallel and sequential searches agree. Evaluation is
stratified 10-fold cross-validation with the training side of each fold
balanced by seeded downsampling, scored by rank-statistic ROC AUC.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .features import ArticleFeatures
from .metrics import average_ranks
from .tableio import open_text

SEARCHSHARE_THRESHOLD = 0.66
RESISTANCE_THRESHOLD = 0.88
TASKS = ("searchshare", "resistance")

NETWORK_FEATURES = ("in_degree", "out_degree", "kcore")
CONTENT_EDIT_FEATURES = (
    "revisions",
    "editors",
    "size",
    "tables",
    "figures",
    "lists",
    "sections",
    "age",
)
FEATURE_GROUPS = ("network", "content-edit", "topic", "all")

MODEL_FORMAT_VERSION = 1

_EPS = 1e-12


def binarize_target(values: Sequence[float], task: str, threshold: float | None = None) -> np.ndarray:
    """0/1 labels for a metric vector.

    searchshare: 1 iff value > threshold (strictly above is search
    dominated). resistance: 1 iff value <= threshold (boundary counts as
    relay).
    """
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}; expected one of {TASKS}")
    if threshold is None:
        threshold = SEARCHSHARE_THRESHOLD if task == "searchshare" else RESISTANCE_THRESHOLD
    if not 0.0 <= threshold <= 1.0:
        raise UsageError(f"threshold must lie in [0, 1], got {threshold}")
    arr = np.asarray(values, dtype=float)
    if task == "searchshare":
        return (arr > threshold).astype(np.int8)
    return (arr <= threshold).astype(np.int8)


@dataclass(frozen=True)
class InstanceSet:
    articles: tuple[str, ...]
    feature_names: tuple[str, ...]
    x: np.ndarray  # n x d, float
    y: np.ndarray  # n, int8 in {0, 1}

    def __len__(self) -> int:
        return len(self.articles)


def build_instances(
    rows: Sequence[ArticleFeatures],
    task: str,
    threshold: float | None = None,
    k_topics: int | None = None,
) -> tuple[InstanceSet, int]:
    """Labeled instances from joined feature rows.

    The vector is network + content/edit features plus a one-hot of the
    dominant topic. Rows without a topic assignment are excluded (the
    count comes back alongside); with no topics anywhere the vector
    simply has no topic block.
    """
    if k_topics is None:
        ids = [r.topic_id for r in rows if r.topic_id is not None]
        k_topics = max(ids) + 1 if ids else 0
    kept = [r for r in rows if r.topic_id is not None] if k_topics else list(rows)
    dropped = len(rows) - len(kept)

    base = NETWORK_FEATURES + CONTENT_EDIT_FEATURES
    names = base + tuple(f"topic_{i}" for i in range(k_topics))
    x = np.zeros((len(kept), len(names)), dtype=float)
    for i, r in enumerate(kept):
        for j, name in enumerate(base):
            x[i, j] = float(getattr(r, name))
        if k_topics:
            if not 0 <= r.topic_id < k_topics:
                raise DataError(f"topic id {r.topic_id} out of range for {r.article!r}")
            x[i, len(base) + r.topic_id] = 1.0

    metric = [r.searchshare if task == "searchshare" else r.resistance for r in kept]
    y = binarize_target(metric, task, threshold)
    return InstanceSet(tuple(r.article for r in kept), names, x, y), dropped


def select_group(instances: InstanceSet, group: str) -> InstanceSet:
    """Column subset for one of the named feature groups."""
    if group not in FEATURE_GROUPS:
        raise UsageError(f"unknown feature group {group!r}; expected one of {FEATURE_GROUPS}")
    if group == "network":
        wanted = [n for n in instances.feature_names if n in NETWORK_FEATURES]
    elif group == "content-edit":
        wanted = [n for n in instances.feature_names if n in CONTENT_EDIT_FEATURES]
    elif group == "topic":
        wanted = [n for n in instances.feature_names if n.startswith("topic_")]
    else:
        wanted = list(instances.feature_names)
    if not wanted:
        raise UsageError(f"no {group!r} features present in the instance set")
    cols = [instances.feature_names.index(n) for n in wanted]
    return InstanceSet(
        instances.articles, tuple(wanted), instances.x[:, cols], instances.y
    )


def balance(instances: InstanceSet, seed) -> InstanceSet:
    """Downsample the majority class to the minority size, seeded.

    Kept indices are re-sorted, so an already balanced set passes
    through with membership and order unchanged.
    """
    y = instances.y
    pos = np.nonzero(y == 1)[0]
    neg = np.nonzero(y == 0)[0]
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("cannot balance a single-class instance set")
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        pos = rng.choice(pos, size=len(neg), replace=False)
    elif len(neg) > len(pos):
        neg = rng.choice(neg, size=len(pos), replace=False)
    keep = np.sort(np.concatenate([pos, neg]))
    return InstanceSet(
        tuple(instances.articles[i] for i in keep),
        instances.feature_names,
        instances.x[keep],
        instances.y[keep],
    )


# ---------------------------------------------------------------------------
# boosted trees


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; feature -1 marks a leaf carrying `value`."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def leaf_values(self, x: np.ndarray) -> np.ndarray:
        n = len(x)
        idx = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        while True:
            feat = self.feature[idx]
            internal = feat >= 0
            if not internal.any():
                return self.value[idx]
            fx = x[rows, np.maximum(feat, 0)]
            go_left = fx <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(internal, nxt, idx)

    def scale_values(self, factor: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, self.value * factor)


@dataclass(frozen=True)
class GBDTConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 20
    seed: int = 0


@dataclass(frozen=True)
class GBDTModel:
    initial_score: float
    learning_rate: float
    feature_names: tuple[str, ...]
    trees: tuple[Tree, ...]
    prior_fallback: bool

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        scores = np.full(len(x), self.initial_score)
        for tree in self.trees:
            scores += self.learning_rate * tree.leaf_values(x)
        return scores

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_scores(x))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of raw scores, computed in a stable form."""
    z = np.asarray(scores, dtype=float)
    # log(1 + e^-m) with m = z for y=1, -z for y=0
    margin = np.where(y == 1, z, -z)
    return float(np.mean(np.logaddexp(0.0, -margin)))


class _TreeBuilder:
    """Grows one regression tree on gradient/hessian targets."""

    def __init__(self, x: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int, min_leaf: int):
        self.x = x
        self.g = g
        self.h = h
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self) -> Tree:
        self._grow(np.arange(len(self.x)), 0)
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=float),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=float),
        )

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _leaf_value(self, idx: np.ndarray) -> float:
        return float(self.g[idx].sum() / (self.h[idx].sum() + _EPS))

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf:
            self.value[node] = self._leaf_value(idx)
            return node
        split = self._best_split(idx)
        if split is None:
            self.value[node] = self._leaf_value(idx)
            return node
        j, thr = split
        go_left = self.x[idx, j] <= thr
        self.feature[node] = j
        self.threshold[node] = thr
        left = self._grow(idx[go_left], depth + 1)
        right = self._grow(idx[~go_left], depth + 1)
        self.left[node] = left
        self.right[node] = right
        return node

    def _best_split(self, idx: np.ndarray) -> tuple[int, float] | None:
        g, h = self.g[idx], self.h[idx]
        g_total, h_total = g.sum(), h.sum()
        parent = g_total * g_total / (h_total + _EPS)
        best_gain = _EPS  # require a strictly positive improvement
        best: tuple[int, float] | None = None
        n = len(idx)
        for j in range(self.x.shape[1]):
            xs = self.x[idx, j]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            boundary = xs_sorted[:-1] < xs_sorted[1:]
            sizes = np.arange(1, n)
            valid = boundary & (sizes >= self.min_leaf) & (n - sizes >= self.min_leaf)
            if not valid.any():
                continue
            gl = np.cumsum(g[order])[:-1]
            hl = np.cumsum(h[order])[:-1]
            gr = g_total - gl
            hr = h_total - hl
            gain = gl * gl / (hl + _EPS) + gr * gr / (hr + _EPS) - parent
            gain = np.where(valid, gain, -np.inf)
            pos = int(np.argmax(gain))  # first max -> lowest threshold
            if gain[pos] > best_gain:
                best_gain = float(gain[pos])
                best = (j, float((xs_sorted[pos] + xs_sorted[pos + 1]) / 2.0))
        return best


def train_gbdt(
    x: np.ndarray,
    y: np.ndarray,
    config: GBDTConfig = GBDTConfig(),
    feature_names: Sequence[str] | None = None,
) -> GBDTModel:
    """Stagewise fit; deterministic for a given config.

    Each stage fits a tree to the current gradients and is accepted only
    if it does not increase training loss; otherwise its leaf values are
    halved until it stops hurting (reaching zero in the limit), so the
    per-stage loss sequence is non-increasing by construction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) != len(y):
        raise UsageError("x must be 2-D with one row per label")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos < 2 or n_neg < 2:
        raise DataError("need at least 2 instances per class")
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{j}" for j in range(x.shape[1])
    )
    if len(names) != x.shape[1]:
        raise UsageError("feature_names length does not match x columns")

    initial = float(np.log(n_pos / n_neg))
    degenerate = bool(np.all(x == x[0], axis=0).all())
    if degenerate:
        return GBDTModel(initial, config.learning_rate, names, (), True)

    scores = np.full(len(y), initial)
    loss = log_loss(scores, y)
    trees: list[Tree] = []
    for _ in range(config.n_trees):
        p = _sigmoid(scores)
        g = y - p
        h = p * (1.0 - p)
        tree = _TreeBuilder(x, g, h, config.max_depth, config.min_leaf).build()
        step = tree.leaf_values(x) * config.learning_rate
        new_loss = log_loss(scores + step, y)
        halvings = 0
        while new_loss > loss and halvings < 60:
            tree = tree.scale_values(0.5)
            step *= 0.5
            new_loss = log_loss(scores + step, y)
            halvings += 1
        if new_loss > loss:
            tree = tree.scale_values(0.0)
            step *= 0.0
            new_loss = loss
        trees.append(tree)
        scores = scores + step
        loss = new_loss
    return GBDTModel(initial, config.learning_rate, names, tuple(trees), False)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC; tied score pairs count one half."""
    y = np.asarray(labels)
    s = list(np.asarray(scores, dtype=float))
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    ranks = np.asarray(average_ranks(s))
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stratified_folds(y: np.ndarray, n_folds: int = 10, seed=0) -> list[np.ndarray]:
    """Seeded stratified partition: per-class shuffle, round-robin deal."""
    if n_folds < 2:
        raise UsageError(f"need at least 2 folds, got {n_folds}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        if len(idx) < n_folds:
            raise DataError(
                f"class {cls} has {len(idx)} instances, fewer than {n_folds} folds"
            )
        for i, v in enumerate(rng.permutation(idx)):
            folds[i % n_folds].append(int(v))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


@dataclass(frozen=True)
class EvalReport:
    task: str
    feature_group: str
    seed: int
    fold_aucs: tuple[float, ...]

    @property
    def mean_auc(self) -> float:
        return sum(self.fold_aucs) / len(self.fold_aucs)


def cross_validate(
    instances: InstanceSet,
    group: str,
    config: GBDTConfig = GBDTConfig(),
    n_folds: int = 10,
    task: str = "",
    threads: int = 1,
) -> EvalReport:
    """Stratified k-fold evaluation of one feature group.

    Only the training side of each fold is balanced; the held-out fold
    keeps its natural class mix. Fold results are merged in fold order,
    so any thread count reproduces the sequential report.
    """
    subset = select_group(instances, group)
    folds = stratified_folds(subset.y, n_folds, config.seed)
    all_idx = np.arange(len(subset.y))

    def run_fold(f: int) -> float:
        test_idx = folds[f]
        train_mask = np.ones(len(subset.y), dtype=bool)
        train_mask[test_idx] = False
        train_idx = all_idx[train_mask]
        train = InstanceSet(
            tuple(subset.articles[i] for i in train_idx),
            subset.feature_names,
            subset.x[train_idx],
            subset.y[train_idx],
        )
        train = balance(train, seed=[config.seed, f])
        model = train_gbdt(train.x, train.y, config, subset.feature_names)
        scores = model.decision_scores(subset.x[test_idx])
        return roc_auc(scores, subset.y[test_idx])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            aucs = tuple(pool.map(run_fold, range(n_folds)))
    else:
        aucs = tuple(run_fold(f) for f in range(n_folds))
    return EvalReport(task, group, config.seed, aucs)


# ---------------------------------------------------------------------------
# serialization


def save_model(path: str | Path, model: GBDTModel) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "loss": "logistic",
        "initial_score": model.initial_score,
        "learning_rate": model.learning_rate,
        "feature_names": list(model.feature_names),
        "prior_fallback": model.prior_fallback,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }
    with open_text(path, "wt") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> GBDTModel:
    with open_text(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version: {version!r}")
    trees = tuple(
        Tree(
            np.asarray(t["feature"], dtype=np.int64),
            np.asarray(t["threshold"], dtype=float),
            np.asarray(t["left"], dtype=np.int64),
            np.asarray(t["right"], dtype=np.int64),
            np.asarray(t["value"], dtype=float),
        )
        for t in doc["trees"]
    )
    return GBDTModel(
        float(doc["initial_score"]),
        float(doc["learning_rate"]),
        tuple(doc["feature_names"]),
        trees,
        bool(doc["prior_fallback"]),
    )


def write_eval_report(path: str | Path, reports: Sequence[EvalReport]) -> None:
    """CSV with one row per fold and a summary row per report."""
    with open_text(path, "wt") as fh:
        fh.write("task,feature_group,fold,auc\n")
        for r in reports:
            for f, auc in enumerate(r.fold_aucs):
                fh.write(f"{r.task},{r.feature_group},{f},{auc!r}\n")
            fh.write(f"{r.task},{r.feature_group},mean,{r.mean_auc!r}\n")
