"""Subgraph ranking models.

Two trained families share the same scoring contract f((a, b), path) -> real:

* a feedforward scorer over mean-pooled language-model embeddings, trained
  with the pointwise / pairwise / listwise objectives from ``losses``;
* gradient-boosted regression trees over hashed n-gram counts.

Two untrained kinds round out the set: cosine similarity against the pair
text and a seeded random scorer.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..kg import FORWARD, MetapathSubgraph
from ..relevance import RankedPairRecord
from ..verbalize import HYPHEN_STYLE, encode_ranker_input, tokenize, verbalize
from .losses import (
    LISTNET,
    LOSS_KINDS,
    RANKNET,
    RMSE,
    loss_listnet,
    loss_listnet_grad,
    loss_ranknet,
    loss_ranknet_grad,
    loss_rmse,
    loss_rmse_grad,
)
from .ngram import DEFAULT_HASH_DIM, NgramLM, dense_features, hashed_counts

logger = logging.getLogger(__name__)

NEURAL = "neural"
GBDT = "gbdt"
SIMILARITY = "similarity"
RANDOM = "random"
MODEL_KINDS = (NEURAL, GBDT, SIMILARITY, RANDOM)

DEFAULT_HIDDEN = 64
MODEL_FORMAT_VERSION = "v1"


@dataclass(frozen=True)
class FeatureConfig:
    include_types: bool = True
    hash_dim: int = DEFAULT_HASH_DIM

    def to_dict(self) -> dict:
        return {"include_types": self.include_types, "hash_dim": self.hash_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(include_types=d["include_types"], hash_dim=d["hash_dim"])


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both trainer families.

    ``lr_decay`` applies inverse-time decay, lr / (1 + decay * epoch); the
    pointwise objective needs it to converge tightly because its gradient
    magnitude does not vanish at the optimum.  ``weight_decay`` is L2
    shrinkage on the weight matrices (never the biases).
    """

    epochs: int = 200
    learning_rate: float = 0.05
    batch: int = 8
    seed: int = 0
    lr_decay: float = 0.0
    weight_decay: float = 0.0
    gbdt_rounds: int = 100
    gbdt_max_depth: int = 3
    gbdt_learning_rate: float = 0.1
    patience: Optional[int] = None

    def __post_init__(self):
        if min(self.epochs, self.batch, self.gbdt_rounds) < 1:
            raise ValueError("epochs, batch and gbdt_rounds must be positive")
        if self.learning_rate <= 0 or self.gbdt_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.lr_decay < 0 or self.weight_decay < 0:
            raise ValueError("lr_decay and weight_decay must be >= 0")
        if self.gbdt_max_depth < 0:
            raise ValueError("gbdt_max_depth must be >= 0")


@dataclass
class NeuralParams:
    """Scorer weights plus the feature standardization fitted at training."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    x_mean: Optional[np.ndarray] = None
    x_std: Optional[np.ndarray] = None

    def standardize(self, X: np.ndarray) -> np.ndarray:
        if self.x_mean is None:
            return X
        return (X - self.x_mean) / self.x_std

    def to_dict(self) -> dict:
        return {"w1": self.w1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": self.b2,
                "x_mean": None if self.x_mean is None else self.x_mean.tolist(),
                "x_std": None if self.x_std is None else self.x_std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralParams":
        return cls(w1=np.asarray(d["w1"], dtype=np.float64),
                   b1=np.asarray(d["b1"], dtype=np.float64),
                   w2=np.asarray(d["w2"], dtype=np.float64),
                   b2=float(d["b2"]),
                   x_mean=None if d.get("x_mean") is None
                   else np.asarray(d["x_mean"], dtype=np.float64),
                   x_std=None if d.get("x_std") is None
                   else np.asarray(d["x_std"], dtype=np.float64))


@dataclass
class RegressionTree:
    """Flat node arrays; feature -1 marks a leaf."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(len(X), dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            f = feature[node[rows]]
            goes_left = X[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(goes_left, left[node[rows]], right[node[rows]])
            active = feature[node] >= 0
        out[:] = value[node]
        return out

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(feature=list(d["feature"]), threshold=list(d["threshold"]),
                   left=list(d["left"]), right=list(d["right"]), value=list(d["value"]))


@dataclass
class GbdtEnsemble:
    base_score: float
    learning_rate: float
    trees: list[RegressionTree] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_dict(self) -> dict:
        return {"base_score": self.base_score, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtEnsemble":
        return cls(base_score=float(d["base_score"]),
                   learning_rate=float(d["learning_rate"]),
                   trees=[RegressionTree.from_dict(t) for t in d["trees"]])


@dataclass
class RankerModel:
    """A deterministic scoring function over (pair, subgraph) inputs."""

    kind: str
    loss_kind: Optional[str] = None
    seed: int = 0
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    neural: Optional[NeuralParams] = None
    gbdt: Optional[GbdtEnsemble] = None
    train_loss_history: list[float] = field(default_factory=list)
    train_rmse_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.loss_kind is not None and self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


def ranker_input_tokens(pair: tuple[str, str], subgraph: MetapathSubgraph,
                        include_types: bool = True) -> list[str]:
    """Lowercased feature tokens for one (pair, subgraph) input."""
    return tokenize(encode_ranker_input(pair, subgraph, include_types=include_types))


def scorer_forward(params: NeuralParams, X: np.ndarray) -> np.ndarray:
    hidden = np.tanh(X @ params.w1 + params.b1)
    return hidden @ params.w2 + params.b2


def scorer_loss_and_grads(params: NeuralParams, X: np.ndarray, loss_kind: str,
                          targets: Optional[Sequence[float]] = None,
                          ranks: Optional[Sequence[int]] = None):
    """Loss value and analytic gradients for every scorer parameter."""
    hidden = np.tanh(X @ params.w1 + params.b1)
    scores = hidden @ params.w2 + params.b2
    if loss_kind == RMSE:
        loss = loss_rmse(scores, targets)
        dl_ds = loss_rmse_grad(scores, targets)
    elif loss_kind == RANKNET:
        loss = loss_ranknet(scores, ranks)
        dl_ds = loss_ranknet_grad(scores, ranks)
    elif loss_kind == LISTNET:
        loss = loss_listnet(scores, targets)
        dl_ds = loss_listnet_grad(scores, targets)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    d_hidden = np.outer(dl_ds, params.w2)
    d_pre = d_hidden * (1.0 - hidden ** 2)
    grads = {
        "w1": X.T @ d_pre,
        "b1": d_pre.sum(axis=0),
        "w2": hidden.T @ dl_ds,
        "b2": float(dl_ds.sum()),
    }
    return loss, grads


def record_pair(record: RankedPairRecord) -> tuple[str, str]:
    return record.e1, record.e2


def record_subgraphs(record: RankedPairRecord) -> list[MetapathSubgraph]:
    """Rebuild path objects from a ranked record's hyphen-joined fields.

    Crossing directions are not stored in records, so every hop comes back
    as forward; features and verbalizations used here do not depend on it.
    """
    out = []
    for mp in record.metapaths:
        names = mp.stops.split(" - ")
        n = len(names)
        types = mp.nodelabels.split(" - ") if mp.nodelabels else [""] * n
        labels = mp.reltypes.split(" - ") if mp.reltypes else [""] * (n - 1)
        if len(types) != n or len(labels) != n - 1:
            raise ValueError(
                f"{record.qid} path {mp.pathid}: inconsistent stops/reltypes/nodelabels")
        node_ids = tuple(f"{record.qid}:{mp.pathid}:{i}" for i in range(n))
        out.append(MetapathSubgraph(
            node_ids=node_ids,
            node_names=tuple(names),
            node_types=tuple(types),
            edge_labels=tuple(labels),
            edge_directions=(FORWARD,) * (n - 1),
        ))
    return out


def _dense_matrix(lm: NgramLM, pair, subgraphs, include_types) -> np.ndarray:
    return np.stack([
        dense_features(lm, ranker_input_tokens(pair, sg, include_types))
        for sg in subgraphs])


def _hashed_matrix(lm: NgramLM, pair, subgraphs, cfg: FeatureConfig) -> np.ndarray:
    return np.stack([
        hashed_counts(ranker_input_tokens(pair, sg, cfg.include_types), lm.n, cfg.hash_dim)
        for sg in subgraphs])


def _stable_unit(seed: int, *parts) -> float:
    digest = hashlib.blake2b("\x1f".join([str(seed), *map(str, parts)]).encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


def score_subgraphs(model: RankerModel, pair: tuple[str, str],
                    subgraphs: Sequence[MetapathSubgraph],
                    lm: Optional[NgramLM] = None) -> np.ndarray:
    """Model scores in input order."""
    if not subgraphs:
        return np.zeros(0, dtype=np.float64)
    cfg = model.feature_config
    if model.kind == NEURAL:
        X = _dense_matrix(lm, pair, subgraphs, cfg.include_types)
        return scorer_forward(model.neural, model.neural.standardize(X))
    if model.kind == GBDT:
        X = _hashed_matrix(lm, pair, subgraphs, cfg)
        return model.gbdt.predict(X)
    if model.kind == SIMILARITY:
        pair_vec = dense_features(lm, tokenize(f"{pair[0]} - {pair[1]}"))
        scores = []
        for sg in subgraphs:
            sg_vec = dense_features(lm, tokenize(verbalize(sg, HYPHEN_STYLE)))
            denom = np.linalg.norm(pair_vec) * np.linalg.norm(sg_vec)
            scores.append(float(pair_vec @ sg_vec / denom) if denom > 0 else 0.0)
        return np.asarray(scores, dtype=np.float64)
    # random: a seeded value per candidate position, stable across runs
    return np.asarray([
        _stable_unit(model.seed, pair[0], pair[1], i) for i in range(len(subgraphs))])


def rank_subgraphs(model: RankerModel, pair: tuple[str, str],
                   subgraphs: Sequence[MetapathSubgraph],
                   lm: Optional[NgramLM] = None) -> list[tuple[MetapathSubgraph, float]]:
    """Candidates sorted by descending score; ties keep input order."""
    if not subgraphs:
        raise ValueError("subgraphs must be non-empty")
    scores = score_subgraphs(model, pair, subgraphs, lm)
    order = sorted(range(len(subgraphs)), key=lambda i: (-scores[i], i))
    return [(subgraphs[i], float(scores[i])) for i in order]


def _eligible_records(dataset: Sequence[RankedPairRecord], loss_kind: str):
    minimum = 1 if loss_kind == RMSE else 2
    kept, skipped = [], 0
    for record in dataset:
        if len(record.metapaths) >= minimum:
            kept.append(record)
        else:
            skipped += 1
    if not kept:
        raise ValueError(f"no record has the >= {minimum} paths needed for {loss_kind}")
    if skipped:
        logger.info("skipped %d records with too few paths for %s", skipped, loss_kind)
    return kept


def train_neural_ranker(dataset: Sequence[RankedPairRecord], lm: NgramLM, loss_kind: str,
                        config: TrainConfig = TrainConfig(),
                        feature_config: FeatureConfig = FeatureConfig()) -> RankerModel:
    """Gradient-descent training of the feedforward scorer.

    Targets are the records' relevance scores; for the pairwise objective
    the rank of each path is its position in the record, which is already
    sorted by descending relevance.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    records = _eligible_records(dataset, loss_kind)

    data = []
    for record in records:
        subgraphs = record_subgraphs(record)
        X = _dense_matrix(lm, record_pair(record), subgraphs, feature_config.include_types)
        y = np.asarray([mp.relscore for mp in record.metapaths], dtype=np.float64)
        ranks = list(range(1, len(subgraphs) + 1))
        data.append((X, y, ranks))

    all_x = np.concatenate([X for X, _, _ in data])
    x_mean = all_x.mean(axis=0)
    x_std = np.maximum(all_x.std(axis=0), 1e-8)
    data = [((X - x_mean) / x_std, y, ranks) for X, y, ranks in data]

    rng = np.random.default_rng(config.seed)
    d = lm.d
    h = DEFAULT_HIDDEN
    params = NeuralParams(
        w1=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, h)),
        b1=np.zeros(h),
        w2=rng.normal(0.0, 1.0 / np.sqrt(h), size=h),
        b2=0.0,
        x_mean=x_mean,
        x_std=x_std,
    )

    history: list[float] = []
    best = np.inf
    stale = 0
    for epoch in range(config.epochs):
        learning_rate = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch):
            batch = order[start:start + config.batch]
            acc = {"w1": np.zeros_like(params.w1), "b1": np.zeros_like(params.b1),
                   "w2": np.zeros_like(params.w2), "b2": 0.0}
            for idx in batch:
                X, y, ranks = data[idx]
                loss, grads = scorer_loss_and_grads(params, X, loss_kind,
                                                    targets=y, ranks=ranks)
                epoch_loss += loss
                for key in acc:
                    acc[key] += grads[key]
            scale = learning_rate / len(batch)
            params.w1 -= scale * acc["w1"] + learning_rate * config.weight_decay * params.w1
            params.b1 -= scale * acc["b1"]
            params.w2 -= scale * acc["w2"] + learning_rate * config.weight_decay * params.w2
            params.b2 -= scale * acc["b2"]
        mean_loss = epoch_loss / len(data)
        history.append(float(mean_loss))
        logger.debug("ranker epoch %d: %s loss %.5f", epoch + 1, loss_kind, mean_loss)
        if config.patience is not None:
            if mean_loss < best - 1e-9:
                best = mean_loss
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info("early stop after %d epochs", epoch + 1)
                    break

    return RankerModel(kind=NEURAL, loss_kind=loss_kind, seed=config.seed,
                       feature_config=feature_config, neural=params,
                       train_loss_history=history)


def _fit_tree(X: np.ndarray, residuals: np.ndarray, max_depth: int,
              min_leaf: int = 1) -> RegressionTree:
    """Greedy variance-reduction regression tree on integer count features."""
    tree = RegressionTree(feature=[], threshold=[], left=[], right=[], value=[])

    def add_node() -> int:
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(0.0)
        return len(tree.feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        node = add_node()
        r = residuals[rows]
        tree.value[node] = float(r.mean())
        if depth >= max_depth or len(rows) < 2 * min_leaf or np.ptp(r) == 0.0:
            return node
        Xn = X[rows]
        total_sum = r.sum()
        total_cnt = len(rows)
        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        base = total_sum * total_sum / total_cnt
        for j in range(X.shape[1]):
            col = Xn[:, j]
            vmax = int(col.max())
            if vmax == int(col.min()):
                continue
            sums = np.bincount(col, weights=r, minlength=vmax + 1)
            cnts = np.bincount(col, minlength=vmax + 1)
            left_sum = np.cumsum(sums)[:-1]
            left_cnt = np.cumsum(cnts)[:-1]
            valid = (left_cnt >= min_leaf) & (total_cnt - left_cnt >= min_leaf)
            if not valid.any():
                continue
            right_sum = total_sum - left_sum
            right_cnt = total_cnt - left_cnt
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(
                    valid,
                    left_sum ** 2 / left_cnt + right_sum ** 2 / right_cnt - base,
                    -np.inf)
            t = int(np.argmax(gain))
            if gain[t] > best_gain + 1e-12:
                best_gain = float(gain[t])
                best_feature = j
                best_threshold = t + 0.5
        if best_feature < 0:
            return node
        mask = Xn[:, best_feature] <= best_threshold
        tree.feature[node] = best_feature
        tree.threshold[node] = best_threshold
        tree.left[node] = build(rows[mask], depth + 1)
        tree.right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(len(X)), 0)
    return tree


def train_gbdt_ranker(dataset: Sequence[RankedPairRecord], lm: NgramLM,
                      config: TrainConfig = TrainConfig(),
                      feature_config: FeatureConfig = FeatureConfig()) -> RankerModel:
    """Squared-error gradient boosting on relevance scores.

    Each round fits a tree to the current residuals; with a learning rate in
    (0, 2] the training RMSE can never increase, and the per-round values
    are recorded on the model.
    """
    records = _eligible_records(dataset, RMSE)
    X_parts, y_parts = [], []
    for record in records:
        subgraphs = record_subgraphs(record)
        X_parts.append(_hashed_matrix(lm, record_pair(record), subgraphs, feature_config))
        y_parts.append([mp.relscore for mp in record.metapaths])
    X = np.concatenate(X_parts).astype(np.int64)
    y = np.concatenate([np.asarray(p, dtype=np.float64) for p in y_parts])

    ensemble = GbdtEnsemble(base_score=float(y.mean()),
                            learning_rate=config.gbdt_learning_rate)
    predictions = np.full(len(y), ensemble.base_score)
    history = [float(np.sqrt(np.mean((y - predictions) ** 2)))]
    for round_idx in range(config.gbdt_rounds):
        tree = _fit_tree(X, y - predictions, config.gbdt_max_depth)
        ensemble.trees.append(tree)
        predictions += ensemble.learning_rate * tree.predict(X)
        rmse = float(np.sqrt(np.mean((y - predictions) ** 2)))
        history.append(rmse)
        logger.debug("gbdt round %d: train rmse %.5f", round_idx + 1, rmse)

    return RankerModel(kind=GBDT, loss_kind=None, seed=config.seed,
                       feature_config=feature_config, gbdt=ensemble,
                       train_rmse_history=history)


def save_model(model: RankerModel, path, lm: Optional[NgramLM] = None) -> None:
    """Write the model (and its language model) as one JSON document."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "loss_kind": model.loss_kind,
        "seed": model.seed,
        "feature": model.feature_config.to_dict(),
        "neural": model.neural.to_dict() if model.neural else None,
        "gbdt": model.gbdt.to_dict() if model.gbdt else None,
        "train_loss_history": model.train_loss_history,
        "train_rmse_history": model.train_rmse_history,
        "ngram_lm": lm.to_dict() if lm else None,
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False) + "\n", encoding="utf-8")


def load_model(path) -> tuple[RankerModel, Optional[NgramLM]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    model = RankerModel(
        kind=doc["kind"],
        loss_kind=doc["loss_kind"],
        seed=doc["seed"],
        feature_config=FeatureConfig.from_dict(doc["feature"]),
        neural=NeuralParams.from_dict(doc["neural"]) if doc["neural"] else None,
        gbdt=GbdtEnsemble.from_dict(doc["gbdt"]) if doc["gbdt"] else None,
        train_loss_history=list(doc.get("train_loss_history") or []),
        train_rmse_history=list(doc.get("train_rmse_history") or []),
    )
    lm = NgramLM.from_dict(doc["ngram_lm"]) if doc.get("ngram_lm") else None
    return model, lm
