"""Six binary classifiers trained from scratch on feature vectors.

Every model maps a feature vector to a dilated-probability score in
[0, 1]; the label rule is dilated iff score >= 0.5.  Training is
deterministic for a given ModelSpec (including its rng_seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, WeightFormatError

__all__ = [
    "KINDS",
    "LABEL_DILATED",
    "LABEL_NORMAL",
    "LabeledDataset",
    "ModelSpec",
    "train",
    "predict_score",
    "predict_scores",
    "predict_label",
    "save_model",
    "load_model",
    "mlp_loss",
    "mlp_gradients",
]

KINDS = ("knn", "svm", "lr", "dt", "rf", "mlp")

LABEL_DILATED = "dilated"
LABEL_NORMAL = "normal"

_MODEL_MAGIC = "biliscope-model 1"


@dataclass
class LabeledDataset:
    rows: np.ndarray          # (n, d) float64
    labels: np.ndarray        # (n,) int, 1 = dilated
    feature_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.labels.shape[0]:
            raise ValueError("rows and labels must have matching length")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("features must be finite")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 (normal) or 1 (dilated)")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    rng_seed: int = 0
    knn_k: int = 5
    svm_c: float = 1.0
    svm_gamma: float = 0.0        # 0 -> 1/d at training time
    svm_tol: float = 1e-3
    svm_max_passes: int = 100
    lr_rate: float = 0.1
    lr_epochs: int = 5000
    dt_max_depth: int = 8
    dt_min_split: int = 2
    rf_trees: int = 100
    rf_bootstrap: bool = True
    rf_feature_sampling: bool = True
    mlp_hidden: int = 10
    mlp_rate: float = 0.1
    mlp_epochs: int = 2000

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.knn_k < 1 or self.rf_trees < 1 or self.mlp_hidden < 1:
            raise ValueError("counts must be >= 1")
        if self.svm_c <= 0 or self.lr_rate <= 0 or self.mlp_rate <= 0:
            raise ValueError("rates and C must be positive")
        if self.dt_max_depth < 1 or self.dt_min_split < 2:
            raise ValueError("invalid tree parameters")


# ---------------------------------------------------------------------------
# Model state
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    kind = "knn"
    rows: np.ndarray
    labels: np.ndarray
    k: int


@dataclass
class LrModel:
    kind = "lr"
    weights: np.ndarray
    bias: float


@dataclass
class SvmModel:
    kind = "svm"
    rows: np.ndarray
    targets: np.ndarray       # (n,) float, +1 dilated / -1 normal
    alphas: np.ndarray
    bias: float
    gamma: float


@dataclass
class TreeModel:
    """Flattened binary tree; row <= threshold goes left."""
    kind = "dt"
    dim: int
    feature: np.ndarray       # (m,) int32, -1 at leaves
    threshold: np.ndarray     # (m,) float64
    left: np.ndarray          # (m,) int32
    right: np.ndarray         # (m,) int32
    score: np.ndarray         # (m,) float64, dilated fraction at leaves


@dataclass
class ForestModel:
    kind = "rf"
    dim: int = 0
    trees: list[TreeModel] = field(default_factory=list)


@dataclass
class MlpModel:
    """d-hidden-2 network: sigmoid hidden layer, softmax output."""
    kind = "mlp"
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


Model = KnnModel | LrModel | SvmModel | TreeModel | ForestModel | MlpModel


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(spec: ModelSpec, data: LabeledDataset) -> Model:
    if data.rows.shape[0] < 1:
        raise DegenerateDataError("empty dataset")
    if spec.kind != "knn":
        if data.rows.shape[0] < 2:
            raise DegenerateDataError("need at least two rows")
        if len(np.unique(data.labels)) < 2:
            raise DegenerateDataError("both classes required for training")
    trainer = {
        "knn": _train_knn, "svm": _train_svm, "lr": _train_lr,
        "dt": _train_dt, "rf": _train_rf, "mlp": _train_mlp,
    }[spec.kind]
    return trainer(spec, data)


def _train_knn(spec: ModelSpec, data: LabeledDataset) -> KnnModel:
    return KnnModel(rows=data.rows.copy(), labels=data.labels.copy(), k=spec.knn_k)


def _train_lr(spec: ModelSpec, data: LabeledDataset) -> LrModel:
    x, y = data.rows, data.labels.astype(np.float64)
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(spec.lr_epochs):
        p = _sigmoid(x @ w + b)
        err = p - y
        w -= spec.lr_rate * (x.T @ err) / n
        b -= spec.lr_rate * err.mean()
    return LrModel(weights=w, bias=b)


def _rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.exp(-gamma * np.maximum(d2, 0.0))


def _train_svm(spec: ModelSpec, data: LabeledDataset) -> SvmModel:
    """Simplified sequential-minimal-optimization with an RBF kernel."""
    x = data.rows
    y = np.where(data.labels == 1, 1.0, -1.0)
    n, d = x.shape
    gamma = spec.svm_gamma if spec.svm_gamma > 0 else 1.0 / d
    c = spec.svm_c
    kernel = _rbf_kernel(x, x, gamma)
    alphas = np.zeros(n)
    b = 0.0
    rng = np.random.default_rng(spec.rng_seed)

    def margin(i: int) -> float:
        return float((alphas * y) @ kernel[:, i] + b)

    passes = 0
    sweeps = 0
    while passes < spec.svm_max_passes and sweeps < 1000:
        changed = 0
        for i in range(n):
            e_i = margin(i) - y[i]
            if not ((y[i] * e_i < -spec.svm_tol and alphas[i] < c)
                    or (y[i] * e_i > spec.svm_tol and alphas[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            e_j = margin(j) - y[j]
            a_i, a_j = alphas[i], alphas[j]
            if y[i] != y[j]:
                lo, hi = max(0.0, a_j - a_i), min(c, c + a_j - a_i)
            else:
                lo, hi = max(0.0, a_i + a_j - c), min(c, a_i + a_j)
            if lo == hi:
                continue
            eta = 2.0 * kernel[i, j] - kernel[i, i] - kernel[j, j]
            if eta >= 0:
                continue
            alphas[j] = np.clip(a_j - y[j] * (e_i - e_j) / eta, lo, hi)
            if abs(alphas[j] - a_j) < 1e-5:
                continue
            alphas[i] = a_i + y[i] * y[j] * (a_j - alphas[j])
            b1 = (b - e_i - y[i] * (alphas[i] - a_i) * kernel[i, i]
                  - y[j] * (alphas[j] - a_j) * kernel[i, j])
            b2 = (b - e_j - y[i] * (alphas[i] - a_i) * kernel[i, j]
                  - y[j] * (alphas[j] - a_j) * kernel[j, j])
            if 0 < alphas[i] < c:
                b = b1
            elif 0 < alphas[j] < c:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            changed += 1
        passes = passes + 1 if changed == 0 else 0
        sweeps += 1
    return SvmModel(rows=x.copy(), targets=y, alphas=alphas, bias=b, gamma=gamma)


def _gini_best_split(x: np.ndarray, y: np.ndarray,
                     features: np.ndarray) -> tuple[int, float] | None:
    """(feature, threshold) minimizing weighted Gini, or None if unsplittable.

    Ties resolve to the first feature in the given order, then the lowest
    threshold, so tree construction is deterministic.
    """
    n = y.shape[0]
    best = None
    best_impurity = np.inf
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        distinct = np.nonzero(np.diff(xs))[0]       # split after these positions
        if distinct.size == 0:
            continue
        pos_left = np.cumsum(ys)[distinct].astype(np.float64)
        n_left = (distinct + 1).astype(np.float64)
        n_right = n - n_left
        pos_right = ys.sum() - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        impurity = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
        k = int(np.argmin(impurity))
        if impurity[k] < best_impurity - 1e-12:
            best_impurity = impurity[k]
            cut = distinct[k]
            best = (int(f), float((xs[cut] + xs[cut + 1]) / 2.0))
    return best


class _TreeBuilder:
    def __init__(self, max_depth: int, min_split: int,
                 n_features_per_split: int | None, rng: np.random.Generator | None):
        self.max_depth = max_depth
        self.min_split = min_split
        self.n_sub = n_features_per_split
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.score: list[float] = []

    def _add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.score.append(0.0)
        return len(self.feature) - 1

    def build(self, x: np.ndarray, y: np.ndarray, depth: int = 0) -> int:
        node = self._add_node()
        n, d = x.shape
        frac = float(y.mean())
        self.score[node] = frac
        if depth >= self.max_depth or n < self.min_split or frac in (0.0, 1.0):
            return node
        if self.n_sub is not None and self.n_sub < d:
            feats = np.sort(self.rng.choice(d, size=self.n_sub, replace=False))
        else:
            feats = np.arange(d)
        split = _gini_best_split(x, y, feats)
        if split is None:
            return node
        f, t = split
        go_left = x[:, f] <= t
        self.feature[node] = f
        self.threshold[node] = t
        self.left[node] = self.build(x[go_left], y[go_left], depth + 1)
        self.right[node] = self.build(x[~go_left], y[~go_left], depth + 1)
        return node

    def to_model(self, dim: int) -> TreeModel:
        return TreeModel(
            dim=dim,
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            score=np.array(self.score, dtype=np.float64),
        )


def _train_dt(spec: ModelSpec, data: LabeledDataset) -> TreeModel:
    builder = _TreeBuilder(spec.dt_max_depth, spec.dt_min_split, None, None)
    builder.build(data.rows, data.labels.astype(np.float64))
    return builder.to_model(data.rows.shape[1])


def _train_rf(spec: ModelSpec, data: LabeledDataset) -> ForestModel:
    n, d = data.rows.shape
    n_sub = max(1, int(round(math.sqrt(d)))) if spec.rf_feature_sampling else None
    seeds = np.random.SeedSequence(spec.rng_seed).spawn(spec.rf_trees)
    trees = []
    for seq in seeds:
        rng = np.random.default_rng(seq)
        if spec.rf_bootstrap:
            idx = rng.integers(0, n, n)
            x, y = data.rows[idx], data.labels[idx].astype(np.float64)
        else:
            x, y = data.rows, data.labels.astype(np.float64)
        builder = _TreeBuilder(spec.dt_max_depth, spec.dt_min_split, n_sub, rng)
        builder.build(x, y)
        trees.append(builder.to_model(d))
    return ForestModel(dim=d, trees=trees)


def _train_mlp(spec: ModelSpec, data: LabeledDataset) -> MlpModel:
    x = data.rows
    n, d = x.shape
    rng = np.random.default_rng(spec.rng_seed)
    model = MlpModel(
        w1=rng.uniform(-0.5, 0.5, (d, spec.mlp_hidden)),
        b1=rng.uniform(-0.5, 0.5, spec.mlp_hidden),
        w2=rng.uniform(-0.5, 0.5, (spec.mlp_hidden, 2)),
        b2=rng.uniform(-0.5, 0.5, 2),
    )
    for _ in range(spec.mlp_epochs):
        grads = mlp_gradients(model, x, data.labels)
        model.w1 -= spec.mlp_rate * grads["w1"]
        model.b1 -= spec.mlp_rate * grads["b1"]
        model.w2 -= spec.mlp_rate * grads["w2"]
        model.b2 -= spec.mlp_rate * grads["b2"]
    return model


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _mlp_forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = _sigmoid(x @ model.w1 + model.b1)
    return hidden, _softmax(hidden @ model.w2 + model.b2)


def mlp_loss(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the two-neuron softmax against 0/1 labels."""
    _, probs = _mlp_forward(model, np.atleast_2d(x))
    picked = probs[np.arange(len(labels)), np.asarray(labels, dtype=int)]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def mlp_gradients(model: MlpModel, x: np.ndarray,
                  labels: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of mlp_loss with respect to every parameter."""
    x = np.atleast_2d(x)
    n = x.shape[0]
    hidden, probs = _mlp_forward(model, x)
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(n), np.asarray(labels, dtype=int)] = 1.0
    dz2 = (probs - one_hot) / n
    dhidden = dz2 @ model.w2.T
    dz1 = dhidden * hidden * (1.0 - hidden)
    return {
        "w1": x.T @ dz1,
        "b1": dz1.sum(axis=0),
        "w2": hidden.T @ dz2,
        "b2": dz2.sum(axis=0),
    }


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_score(model: Model, v: np.ndarray) -> float:
    return float(predict_scores(model, np.atleast_2d(np.asarray(v, dtype=np.float64)))[0])


def predict_scores(model: Model, rows: np.ndarray) -> np.ndarray:
    """Dilated-probability scores for a batch of feature vectors."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    dim = _model_dim(model)
    if rows.shape[1] != dim:
        raise ValueError(f"expected {dim} features, got {rows.shape[1]}")
    if isinstance(model, KnnModel):
        k = min(model.k, model.rows.shape[0])
        out = np.empty(rows.shape[0])
        for i, v in enumerate(rows):
            dist = np.sqrt(((model.rows - v) ** 2).sum(axis=1))
            nearest = np.argsort(dist, kind="stable")[:k]
            out[i] = model.labels[nearest].mean()
        return out
    if isinstance(model, LrModel):
        return _sigmoid(rows @ model.weights + model.bias)
    if isinstance(model, SvmModel):
        kernel = _rbf_kernel(rows, model.rows, model.gamma)
        margins = kernel @ (model.alphas * model.targets) + model.bias
        return _sigmoid(margins)
    if isinstance(model, TreeModel):
        return np.array([_tree_score(model, v) for v in rows])
    if isinstance(model, ForestModel):
        return np.mean([predict_scores(t, rows) for t in model.trees], axis=0)
    if isinstance(model, MlpModel):
        _, probs = _mlp_forward(model, rows)
        return probs[:, 1]
    raise TypeError(f"unknown model type {type(model).__name__}")


def _tree_score(model: TreeModel, v: np.ndarray) -> float:
    node = 0
    while model.feature[node] >= 0:
        if v[model.feature[node]] <= model.threshold[node]:
            node = model.left[node]
        else:
            node = model.right[node]
    return float(model.score[node])


def _model_dim(model: Model) -> int:
    if isinstance(model, KnnModel):
        return model.rows.shape[1]
    if isinstance(model, LrModel):
        return model.weights.shape[0]
    if isinstance(model, SvmModel):
        return model.rows.shape[1]
    if isinstance(model, TreeModel):
        return model.dim
    if isinstance(model, ForestModel):
        return model.dim
    if isinstance(model, MlpModel):
        return model.w1.shape[0]
    raise TypeError(f"unknown model type {type(model).__name__}")


def predict_label(model: Model, v: np.ndarray) -> str:
    return LABEL_DILATED if predict_score(model, v) >= 0.5 else LABEL_NORMAL


# ---------------------------------------------------------------------------
# Model files: kind-tagged header lines, then little-endian float32 payload
# ---------------------------------------------------------------------------

def _payload(arrays: list[np.ndarray]) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)


def save_model(model: Model, path: str | Path) -> None:
    header: list[str] = [_MODEL_MAGIC]
    arrays: list[np.ndarray] = []
    if isinstance(model, KnnModel):
        n, d = model.rows.shape
        header.append(f"knn {model.k} {n} {d}")
        arrays = [model.rows, model.labels]
    elif isinstance(model, LrModel):
        header.append(f"lr {model.weights.shape[0]}")
        arrays = [model.weights, np.array([model.bias])]
    elif isinstance(model, SvmModel):
        n, d = model.rows.shape
        header.append(f"svm {n} {d}")
        arrays = [model.rows, model.targets, model.alphas,
                  np.array([model.bias, model.gamma])]
    elif isinstance(model, TreeModel):
        header.append(f"dt {model.feature.shape[0]} {model.dim}")
        arrays = _tree_arrays(model)
    elif isinstance(model, ForestModel):
        header.append(f"rf {len(model.trees)} {model.dim}")
        for tree in model.trees:
            header.append(f"tree {tree.feature.shape[0]}")
            arrays.extend(_tree_arrays(tree))
    elif isinstance(model, MlpModel):
        d, h = model.w1.shape
        header.append(f"mlp {d} {h}")
        arrays = [model.w1, model.b1, model.w2, model.b2]
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("ascii"))
        fh.write(_payload(arrays))


def _tree_arrays(tree: TreeModel) -> list[np.ndarray]:
    return [tree.feature, tree.threshold, tree.left, tree.right, tree.score]


def _take(buf: np.ndarray, offset: int, count: int) -> tuple[np.ndarray, int]:
    if offset + count > buf.shape[0]:
        raise WeightFormatError("model payload too short")
    return buf[offset:offset + count].astype(np.float64), offset + count


def _read_tree(buf: np.ndarray, offset: int, m: int, dim: int) -> tuple[TreeModel, int]:
    feature, offset = _take(buf, offset, m)
    threshold, offset = _take(buf, offset, m)
    left, offset = _take(buf, offset, m)
    right, offset = _take(buf, offset, m)
    score, offset = _take(buf, offset, m)
    tree = TreeModel(
        dim=dim,
        feature=feature.astype(np.int32), threshold=threshold,
        left=left.astype(np.int32), right=right.astype(np.int32), score=score,
    )
    return tree, offset


def load_model(path: str | Path) -> Model:
    blob = Path(path).read_bytes()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise WeightFormatError("missing blank line after model header")
    lines = blob[:sep].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise WeightFormatError("not a model file")
    buf = np.frombuffer(blob[sep + 2:], dtype="<f4")
    try:
        tag = lines[1].split()
    except IndexError:
        raise WeightFormatError("missing model tag line") from None
    try:
        return _load_tagged(tag, lines, buf)
    except (ValueError, IndexError) as exc:
        raise WeightFormatError(f"malformed model file: {exc}") from exc


def _load_tagged(tag: list[str], lines: list[str], buf: np.ndarray) -> Model:
    kind = tag[0]
    offset = 0
    if kind == "knn":
        k, n, d = (int(t) for t in tag[1:4])
        rows, offset = _take(buf, offset, n * d)
        labels, offset = _take(buf, offset, n)
        return KnnModel(rows=rows.reshape(n, d), labels=labels.astype(np.int64), k=k)
    if kind == "lr":
        d = int(tag[1])
        w, offset = _take(buf, offset, d)
        b, offset = _take(buf, offset, 1)
        return LrModel(weights=w, bias=float(b[0]))
    if kind == "svm":
        n, d = int(tag[1]), int(tag[2])
        rows, offset = _take(buf, offset, n * d)
        targets, offset = _take(buf, offset, n)
        alphas, offset = _take(buf, offset, n)
        extra, offset = _take(buf, offset, 2)
        return SvmModel(rows=rows.reshape(n, d), targets=targets, alphas=alphas,
                        bias=float(extra[0]), gamma=float(extra[1]))
    if kind == "dt":
        tree, _ = _read_tree(buf, offset, int(tag[1]), int(tag[2]))
        return tree
    if kind == "rf":
        dim = int(tag[2])
        trees = []
        for line in lines[2:]:
            parts = line.split()
            if parts[0] != "tree":
                raise WeightFormatError(f"unexpected forest line {line!r}")
            tree, offset = _read_tree(buf, offset, int(parts[1]), dim)
            trees.append(tree)
        if len(trees) != int(tag[1]):
            raise WeightFormatError("tree count mismatch")
        return ForestModel(dim=dim, trees=trees)
    if kind == "mlp":
        d, h = int(tag[1]), int(tag[2])
        w1, offset = _take(buf, offset, d * h)
        b1, offset = _take(buf, offset, h)
        w2, offset = _take(buf, offset, h * 2)
        b2, offset = _take(buf, offset, 2)
        return MlpModel(w1=w1.reshape(d, h), b1=b1, w2=w2.reshape(h, 2), b2=b2)
    raise WeightFormatError(f"unknown model kind {kind!r}")
