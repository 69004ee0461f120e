"""From-scratch Random Forest and KNN over feature vectors, high-variance
feature selection, and the evaluation harness.

Trees are CART with Gini impurity; thresholds are midpoints between
consecutive sorted unique feature values, and each split considers a seeded
random subset of features. Prediction ties break toward the more severe
grade: in a health-facing tool it is safer to over-warn.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .aqi import GRADES, AqiGrade
from .features import GaborBank

N_CLASSES = len(GRADES)


class ClassifyError(Exception):
    """Base class for classifier failures."""


class SchemaMismatch(ClassifyError):
    pass


class LengthMismatch(ClassifyError):
    pass


class DegenerateData(UserWarning):
    """Training data held a single class; the model is a constant predictor."""


def severity_argmax(scores: np.ndarray) -> int:
    """Index of the maximum score; ties go to the more severe grade."""
    scores = np.asarray(scores)
    return int(len(scores) - 1 - np.argmax(scores[::-1]))


def _as_labels(y) -> np.ndarray:
    out = np.array(
        [v.value if isinstance(v, AqiGrade) else int(v) for v in y], dtype=np.int64
    )
    if out.size and (out.min() < 0 or out.max() >= N_CLASSES):
        raise ValueError("labels must be AqiGrade values (0..4)")
    return out


@dataclass(frozen=True)
class RandomForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # default: ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class DecisionTree:
    """Flat-array CART tree. feature[i] == -1 marks a leaf; counts[i] holds the
    training class distribution at node i."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def predict_class(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return severity_argmax(self.counts[node])

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int64),
            threshold=np.asarray(doc["threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int64),
            right=np.asarray(doc["right"], dtype=np.int64),
            counts=np.asarray(doc["counts"], dtype=np.int64),
        )


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float((p * p).sum())


def _best_threshold(col: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (weighted child Gini, threshold) for one feature, or None if the
    feature admits no valid split."""
    order = np.argsort(col, kind="stable")
    sv = col[order]
    sy = y[order]
    n = len(sv)
    # cumulative class counts over the sorted samples
    onehot = np.zeros((n, N_CLASSES), dtype=np.int64)
    onehot[np.arange(n), sy] = 1
    prefix = np.cumsum(onehot, axis=0)
    total = prefix[-1]
    boundaries = np.nonzero(sv[1:] > sv[:-1])[0]  # split after index b
    best = None
    for b in boundaries:
        n_left = b + 1
        n_right = n - n_left
        if n_left < min_leaf or n_right < min_leaf:
            continue
        left_counts = prefix[b]
        right_counts = total - left_counts
        score = (n_left * _gini(left_counts) + n_right * _gini(right_counts)) / n
        thr = (sv[b] + sv[b + 1]) / 2.0
        if best is None or score < best[0]:
            best = (score, thr)
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    cfg: RandomForestConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    d = X.shape[1]
    k = cfg.features_per_split or math.ceil(math.sqrt(d))
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.zeros(N_CLASSES, dtype=np.int64))
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        node_counts = np.bincount(y[idx], minlength=N_CLASSES)
        counts[node] = node_counts
        pure = (node_counts > 0).sum() <= 1
        depth_capped = cfg.max_depth is not None and depth >= cfg.max_depth
        if pure or depth_capped or len(idx) < 2 * cfg.min_samples_leaf:
            return node
        # examine features in a seeded random order; keep scanning past the
        # quota while no splittable feature has been found, so separable nodes
        # always split (a node only stays a leaf if every feature is constant)
        best = None
        splittable_seen = 0
        for f in rng.permutation(d):
            res = _best_threshold(X[idx, f], y[idx], cfg.min_samples_leaf)
            if res is None:
                continue
            splittable_seen += 1
            if best is None or res[0] < best[0]:
                best = (res[0], f, res[1])
            if splittable_seen >= k:
                break
        if best is None:
            return node
        _, f, thr = best
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
    )


@dataclass
class RandomForestModel:
    config: RandomForestConfig
    trees: list[DecisionTree]
    n_features: int
    schema_id: str | None = None
    bank: GaborBank | None = None
    degenerate_class: int | None = None

    @property
    def is_degenerate(self) -> bool:
        return self.degenerate_class is not None

    @property
    def model_id(self) -> str:
        tag = hashlib.sha256(
            json.dumps(
                [t.to_json() for t in self.trees], sort_keys=True, default=str
            ).encode()
        ).hexdigest()[:12]
        return f"skycast-rf-{tag}"


def train_random_forest(X, y, cfg: RandomForestConfig | None = None) -> RandomForestModel:
    """Grow n_trees CART trees on seeded bootstrap resamples.

    A single-class dataset yields a constant classifier and a DegenerateData
    warning rather than an error.
    """
    cfg = cfg or RandomForestConfig()
    X = np.asarray(X, dtype=np.float64)
    labels = _as_labels(y)
    if X.ndim != 2 or len(X) != len(labels):
        raise LengthMismatch("X and y must be aligned, X 2-D")
    if len(labels) < 2:
        raise ValueError("need at least 2 training samples")
    if len(np.unique(labels)) < 2:
        warnings.warn("training data has a single class", DegenerateData)
        return RandomForestModel(
            config=cfg,
            trees=[],
            n_features=X.shape[1],
            degenerate_class=int(labels[0]),
        )
    trees = []
    n = len(labels)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, t])
        idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(_grow_tree(X[idx], labels[idx], cfg, rng))
    return RandomForestModel(config=cfg, trees=trees, n_features=X.shape[1])


def rf_votes(model: RandomForestModel, x) -> np.ndarray:
    """Per-class vote fractions across the forest (sum to 1)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) != model.n_features:
        raise SchemaMismatch(
            f"feature length {len(x)} does not match training schema "
            f"({model.n_features})"
        )
    if model.is_degenerate:
        votes = np.zeros(N_CLASSES)
        votes[model.degenerate_class] = 1.0
        return votes
    counts = np.zeros(N_CLASSES)
    for tree in model.trees:
        counts[tree.predict_class(x)] += 1
    return counts / counts.sum()


def rf_predict(model: RandomForestModel, x) -> tuple[AqiGrade, np.ndarray]:
    """Majority vote across trees; ties break toward the more severe grade."""
    votes = rf_votes(model, x)
    return GRADES[severity_argmax(votes)], votes


@dataclass(frozen=True)
class KnnConfig:
    k: int = 3
    selected_features: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be odd and >= 1")


def select_high_variance_features(X, keep_fraction: float) -> list[int]:
    """Indices of the top ceil(keep_fraction * d) features by variance,
    returned ascending; ties at the cutoff prefer the lower index."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    X = np.asarray(X, dtype=np.float64)
    variances = X.var(axis=0)
    d = X.shape[1]
    keep = math.ceil(keep_fraction * d)
    ranked = sorted(range(d), key=lambda i: (-variances[i], i))
    return sorted(ranked[:keep])


@dataclass
class KnnModel:
    config: KnnConfig
    mean: np.ndarray
    std: np.ndarray
    X: np.ndarray  # standardized training matrix
    y: np.ndarray
    n_features: int  # pre-selection feature length
    schema_id: str | None = None
    bank: GaborBank | None = None

    @property
    def model_id(self) -> str:
        tag = hashlib.sha256(self.X.tobytes() + self.y.tobytes()).hexdigest()[:12]
        return f"skycast-knn-{tag}"


def fit_knn(X, y, cfg: KnnConfig | None = None) -> KnnModel:
    """Standardize with training-set statistics (zero-variance features pass
    through unscaled) and store the training matrix."""
    cfg = cfg or KnnConfig()
    X = np.asarray(X, dtype=np.float64)
    labels = _as_labels(y)
    if X.ndim != 2 or len(X) != len(labels):
        raise LengthMismatch("X and y must be aligned, X 2-D")
    if len(labels) < cfg.k:
        raise ValueError(f"need at least k={cfg.k} training samples")
    n_features = X.shape[1]
    if cfg.selected_features is not None:
        sel = list(cfg.selected_features)
        if any(i < 0 or i >= n_features for i in sel):
            raise ValueError("selected feature index out of range")
        X = X[:, sel]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return KnnModel(
        config=cfg,
        mean=mean,
        std=std,
        X=(X - mean) / std,
        y=labels,
        n_features=n_features,
    )


def knn_predict(model: KnnModel, x) -> AqiGrade:
    """Majority grade among the k nearest neighbors (Euclidean on
    standardized features); distance ties prefer the lower training index,
    vote ties the more severe grade."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) != model.n_features:
        raise SchemaMismatch(
            f"feature length {len(x)} does not match training schema "
            f"({model.n_features})"
        )
    if model.config.selected_features is not None:
        x = x[list(model.config.selected_features)]
    z = (x - model.mean) / model.std
    d2 = ((model.X - z) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(d2)), d2))
    votes = np.bincount(model.y[order[: model.config.k]], minlength=N_CLASSES)
    return GRADES[severity_argmax(votes)]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray  # rows = truth, cols = prediction
    per_class_f1: np.ndarray


def evaluate(y_true, y_pred, n_classes: int = N_CLASSES) -> EvalReport:
    """Accuracy, confusion matrix, and macro F1.

    Macro F1 averages over all n_classes; classes absent from both truth and
    prediction contribute 0, keeping the metric comparable across folds.
    """
    t = np.array([v.value if isinstance(v, AqiGrade) else int(v) for v in y_true])
    p = np.array([v.value if isinstance(v, AqiGrade) else int(v) for v in y_pred])
    if len(t) != len(p):
        raise LengthMismatch(f"lengths differ: {len(t)} vs {len(p)}")
    if len(t) == 0:
        raise LengthMismatch("cannot evaluate an empty prediction set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (t, p), 1)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    return EvalReport(
        accuracy=float(tp.sum() / len(t)),
        macro_f1=float(per_class.mean()),
        confusion=confusion,
        per_class_f1=per_class,
    )


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

RF_MAGIC = "SKYCAST-RF v1"
KNN_MAGIC = "SKYCAST-KNN v1"


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(text: str, shape) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(text), dtype="<f8")
    return flat.reshape(shape).copy()


def save_rf(model: RandomForestModel, path) -> None:
    doc = {
        "model_id": model.model_id,
        "config": {
            "n_trees": model.config.n_trees,
            "max_depth": model.config.max_depth,
            "min_samples_leaf": model.config.min_samples_leaf,
            "features_per_split": model.config.features_per_split,
            "bootstrap": model.config.bootstrap,
            "seed": model.config.seed,
        },
        "n_features": model.n_features,
        "schema_id": model.schema_id,
        "bank": model.bank.to_json() if model.bank else None,
        "degenerate_class": model.degenerate_class,
        "trees": [t.to_json() for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RF_MAGIC + "\n")
        json.dump(doc, fh)
        fh.write("\n")


def load_rf(path) -> RandomForestModel:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != RF_MAGIC:
            raise ClassifyError(f"not a {RF_MAGIC} file: {path}")
        doc = json.load(fh)
    return RandomForestModel(
        config=RandomForestConfig(**doc["config"]),
        trees=[DecisionTree.from_json(t) for t in doc["trees"]],
        n_features=doc["n_features"],
        schema_id=doc.get("schema_id"),
        bank=GaborBank.from_json(doc["bank"]) if doc.get("bank") else None,
        degenerate_class=doc.get("degenerate_class"),
    )


def save_knn(model: KnnModel, path) -> None:
    doc = {
        "model_id": model.model_id,
        "config": {
            "k": model.config.k,
            "selected_features": list(model.config.selected_features)
            if model.config.selected_features is not None
            else None,
        },
        "n_features": model.n_features,
        "schema_id": model.schema_id,
        "bank": model.bank.to_json() if model.bank else None,
        "mean": _b64(model.mean),
        "std": _b64(model.std),
        "X": _b64(model.X),
        "X_shape": list(model.X.shape),
        "y": model.y.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(KNN_MAGIC + "\n")
        json.dump(doc, fh)
        fh.write("\n")


def load_knn(path) -> KnnModel:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != KNN_MAGIC:
            raise ClassifyError(f"not a {KNN_MAGIC} file: {path}")
        doc = json.load(fh)
    cfg = KnnConfig(
        k=doc["config"]["k"],
        selected_features=tuple(doc["config"]["selected_features"])
        if doc["config"]["selected_features"] is not None
        else None,
    )
    shape = doc["X_shape"]
    return KnnModel(
        config=cfg,
        mean=_unb64(doc["mean"], (shape[1],)),
        std=_unb64(doc["std"], (shape[1],)),
        X=_unb64(doc["X"], shape),
        y=np.asarray(doc["y"], dtype=np.int64),
        n_features=doc["n_features"],
        schema_id=doc.get("schema_id"),
        bank=GaborBank.from_json(doc["bank"]) if doc.get("bank") else None,
    )
