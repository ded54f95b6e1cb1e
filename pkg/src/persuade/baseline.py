"""Built-in stand-in predictor plus the score-file contract.

A one-vs-rest logistic classifier over hashed character n-grams: enough to
drive the whole pipeline without an external ML stack.  External predictors
enter through the same score TSV that `predict_scores` emits.
"""

from __future__ import annotations

import hashlib
import io
import json
import unicodedata
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from persuade.corpus import Corpus, ParagraphId, PredictionSet
from persuade.errors import PersuadeError, SchemaError
from persuade.metrics import f1_multilabel
from persuade.taxonomy import TECHNIQUE_INDEX, TECHNIQUES

SCORE_FORMAT = "%.9g"
MODEL_FORMAT_TAG = "persuade-ovr/1"


@dataclass(frozen=True)
class FeatureConfig:
    ngram_min: int = 3
    ngram_max: int = 5
    hash_dim: int = 2**18

    def __post_init__(self):
        if not (0 < self.ngram_min <= self.ngram_max):
            raise PersuadeError("need 0 < ngram_min <= ngram_max")
        if self.hash_dim & (self.hash_dim - 1) or self.hash_dim <= 0:
            raise PersuadeError("hash_dim must be a power of two")


def _hash_ngram(ngram: str) -> int:
    # Stable across processes, unlike the interpreter's salted hash().
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def featurize(text: str, config: FeatureConfig = FeatureConfig()) -> sparse.csr_matrix:
    """Signed-hash counts of character n-grams, L2-normalized, as a 1xD row."""
    if not text:
        raise PersuadeError("cannot featurize empty text")
    normalized = unicodedata.normalize("NFC", text).lower()
    buckets: dict[int, float] = {}
    for n in range(config.ngram_min, config.ngram_max + 1):
        for i in range(len(normalized) - n + 1):
            h = _hash_ngram(normalized[i : i + n])
            bucket = h & (config.hash_dim - 1)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            buckets[bucket] = buckets.get(bucket, 0.0) + sign
    if buckets:
        indices = np.fromiter(buckets.keys(), dtype=np.int64)
        values = np.fromiter(buckets.values(), dtype=np.float64)
        norm = np.linalg.norm(values)
        if norm > 0:
            values /= norm
    else:
        indices = np.empty(0, dtype=np.int64)
        values = np.empty(0, dtype=np.float64)
    indptr = np.array([0, len(indices)])
    return sparse.csr_matrix((values, indices, indptr), shape=(1, config.hash_dim))


def featurize_corpus(corpus: Corpus, config: FeatureConfig = FeatureConfig()) -> sparse.csr_matrix:
    rows = [featurize(p.text, config) for p in corpus]
    if not rows:
        return sparse.csr_matrix((0, config.hash_dim))
    return sparse.vstack(rows, format="csr")


def _label_matrix(corpus: Corpus) -> np.ndarray:
    y = np.zeros((len(corpus), len(TECHNIQUES)))
    for i, p in enumerate(corpus):
        for t in p.labels:
            y[i, TECHNIQUE_INDEX[t]] = 1.0
    return y


def bce_loss(
    weights: np.ndarray, bias: np.ndarray, features, targets: np.ndarray
) -> float:
    """Mean binary cross-entropy over rows, summed over label heads.

    Computed as softplus(z) - y*z, which is exact and stable for any z.
    """
    z = features @ weights + bias
    return float(np.sum(np.logaddexp(0.0, z) - targets * z) / targets.shape[0])


def bce_gradient(
    weights: np.ndarray, bias: np.ndarray, features, targets: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    z = features @ weights + bias
    delta = expit(z) - targets
    n = targets.shape[0]
    grad_w = (features.T @ delta) / n
    grad_w = np.asarray(grad_w)
    grad_b = delta.sum(axis=0) / n
    return grad_w, grad_b


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 42
    selection_metric: str = "micro"  # or "macro"

    def __post_init__(self):
        if self.selection_metric not in ("micro", "macro"):
            raise PersuadeError("selection_metric must be 'micro' or 'macro'")


@dataclass(frozen=True)
class TrainMetadata:
    epochs_run: int
    best_epoch: int
    best_dev_micro_f1: float
    seed: int
    degenerate_labels: tuple[str, ...] = ()
    loss_history: tuple[float, ...] = ()


@dataclass
class OvrModel:
    feature_config: FeatureConfig
    weights: np.ndarray  # (hash_dim, 23)
    bias: np.ndarray  # (23,)
    metadata: TrainMetadata

    def __post_init__(self):
        if self.weights.shape != (self.feature_config.hash_dim, len(TECHNIQUES)):
            raise PersuadeError(f"bad weight shape {self.weights.shape}")
        if self.bias.shape != (len(TECHNIQUES),):
            raise PersuadeError(f"bad bias shape {self.bias.shape}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise PersuadeError("model has non-finite parameters")


def train(
    train_corpus: Corpus,
    dev_corpus: Corpus,
    feature_config: FeatureConfig = FeatureConfig(),
    train_config: TrainConfig = TrainConfig(),
) -> OvrModel:
    """Mini-batch gradient descent on per-label BCE with dev-based selection.

    After every epoch the dev F1 at threshold 0.5 is computed and the
    weights of the best epoch are retained.  Labels with zero positive
    training examples are fitted as bias-only priors and recorded.
    """
    if not len(train_corpus):
        raise PersuadeError("training corpus is empty")
    if not len(dev_corpus):
        raise PersuadeError("dev corpus is empty")

    x_train = featurize_corpus(train_corpus, feature_config)
    y_train = _label_matrix(train_corpus)
    x_dev = featurize_corpus(dev_corpus, feature_config)

    n, n_labels = y_train.shape
    weights = np.zeros((feature_config.hash_dim, n_labels))
    bias = np.zeros(n_labels)

    positives = y_train.sum(axis=0)
    degenerate = positives == 0
    prior = 1.0 / (n + 2.0)
    bias[degenerate] = np.log(prior / (1.0 - prior))
    trainable = ~degenerate

    rng = np.random.default_rng(train_config.seed)
    best_metric = -1.0
    best_epoch = 0
    best_weights = weights.copy()
    best_bias = bias.copy()
    loss_history = []

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            xb = x_train[batch]
            yb = y_train[batch]
            active = np.unique(xb.indices)
            if active.size == 0:
                continue
            xa = xb[:, active]
            grad_w, grad_b = bce_gradient(weights[active][:, trainable], bias[trainable], xa, yb[:, trainable])
            w_slice = weights[np.ix_(active, np.flatnonzero(trainable))]
            weights[np.ix_(active, np.flatnonzero(trainable))] = (
                w_slice - train_config.learning_rate * grad_w
            )
            bias[trainable] -= train_config.learning_rate * grad_b

        loss_history.append(bce_loss(weights, bias, x_train, y_train))
        dev_pred = _predictions_at(x_dev, weights, bias, dev_corpus.ids(), 0.5)
        report = f1_multilabel(dev_corpus, dev_pred)
        metric = report.micro_f1 if train_config.selection_metric == "micro" else report.macro_f1
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_weights = weights.copy()
            best_bias = bias.copy()

    metadata = TrainMetadata(
        epochs_run=train_config.epochs,
        best_epoch=best_epoch,
        best_dev_micro_f1=best_metric,
        seed=train_config.seed,
        degenerate_labels=tuple(
            TECHNIQUES[j].name for j in np.flatnonzero(degenerate)
        ),
        loss_history=tuple(loss_history),
    )
    return OvrModel(feature_config, best_weights, best_bias, metadata)


def _predictions_at(
    features, weights, bias, ids: Sequence[ParagraphId], threshold: float
) -> PredictionSet:
    probs = expit(features @ weights + bias)
    pred: PredictionSet = {}
    for i, pid in enumerate(ids):
        chosen = frozenset(TECHNIQUES[j] for j in np.flatnonzero(probs[i] >= threshold))
        pred[pid] = chosen
    return pred


@dataclass
class ScoreMatrix:
    """Per-paragraph, per-technique probabilities in canonical technique order."""

    ids: tuple[ParagraphId, ...]
    scores: np.ndarray  # (n, 23)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.ids), len(TECHNIQUES)):
            raise SchemaError(
                f"score matrix shape {self.scores.shape} does not match {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise SchemaError("duplicate paragraph ids in score matrix")
        if self.scores.size and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise SchemaError("scores must lie in [0, 1]")
        self._row_of = {pid: i for i, pid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def has(self, pid: ParagraphId) -> bool:
        return pid in self._row_of

    def row(self, pid: ParagraphId) -> np.ndarray:
        return self.scores[self._row_of[pid]]

    def subset(self, ids: Sequence[ParagraphId]) -> "ScoreMatrix":
        rows = [self._row_of[pid] for pid in ids]
        return ScoreMatrix(tuple(ids), self.scores[rows])


def predict_scores(model: OvrModel, corpus: Corpus) -> ScoreMatrix:
    features = featurize_corpus(corpus, model.feature_config)
    probs = expit(features @ model.weights + model.bias)
    return ScoreMatrix(corpus.ids(), probs)


def write_scores(matrix: ScoreMatrix, path: str | Path) -> None:
    header = "article_id\tparagraph_index\t" + "\t".join(t.name for t in TECHNIQUES)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for pid, row in zip(matrix.ids, matrix.scores):
            cells = "\t".join(SCORE_FORMAT % v for v in row)
            fh.write(f"{pid.article_id}\t{pid.paragraph_index}\t{cells}\n")


def read_scores(path: str | Path, corpus: Corpus | None = None) -> ScoreMatrix:
    """Read a score TSV, validating the schema (and ids, when a corpus is given)."""
    path = Path(path)
    expected_header = ["article_id", "paragraph_index"] + [t.name for t in TECHNIQUES]
    ids: list[ParagraphId] = []
    rows: list[list[float]] = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != expected_header:
            raise SchemaError(f"{path}: bad score header (want 25 canonical columns)")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(expected_header):
                raise SchemaError(
                    f"{path}:{line_no}: expected {len(expected_header)} columns, got {len(parts)}"
                )
            try:
                pid = ParagraphId(parts[0], int(parts[1]))
                values = [float(v) for v in parts[2:]]
            except (ValueError, PersuadeError) as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from exc
            for v in values:
                if not (0.0 <= v <= 1.0):
                    raise SchemaError(f"{path}:{line_no}: score {v} out of [0, 1]")
            if corpus is not None and pid not in corpus:
                raise SchemaError(f"{path}:{line_no}: unknown paragraph id {pid}")
            ids.append(pid)
            rows.append(values)
    matrix = np.array(rows) if rows else np.zeros((0, len(TECHNIQUES)))
    return ScoreMatrix(tuple(ids), matrix)


def save_model(model: OvrModel, path: str | Path) -> None:
    meta = {
        "format": MODEL_FORMAT_TAG,
        "feature_config": {
            "ngram_min": model.feature_config.ngram_min,
            "ngram_max": model.feature_config.ngram_max,
            "hash_dim": model.feature_config.hash_dim,
        },
        "metadata": {
            "epochs_run": model.metadata.epochs_run,
            "best_epoch": model.metadata.best_epoch,
            "best_dev_micro_f1": model.metadata.best_dev_micro_f1,
            "seed": model.metadata.seed,
            "degenerate_labels": list(model.metadata.degenerate_labels),
            "loss_history": list(model.metadata.loss_history),
        },
    }
    arrays = {
        "weights": model.weights,
        "bias": model.bias,
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
    }
    # np.savez stamps zip entries with the wall clock; write the archive
    # ourselves with a fixed timestamp so identical models are identical bytes.
    with zipfile.ZipFile(Path(path), "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, array in arrays.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.ascontiguousarray(array))
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buffer.getvalue())


def load_model(path: str | Path) -> OvrModel:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != MODEL_FORMAT_TAG:
            raise SchemaError(f"{path}: unknown model format {meta.get('format')!r}")
        fc = FeatureConfig(**meta["feature_config"])
        md = meta["metadata"]
        metadata = TrainMetadata(
            epochs_run=int(md["epochs_run"]),
            best_epoch=int(md["best_epoch"]),
            best_dev_micro_f1=float(md["best_dev_micro_f1"]),
            seed=int(md["seed"]),
            degenerate_labels=tuple(md["degenerate_labels"]),
            loss_history=tuple(md["loss_history"]),
        )
        return OvrModel(fc, data["weights"], data["bias"], metadata)
