"""Zero-shot causal classification with ranked subgraphs as prompt context,
plus the baselines and evaluation metrics used to compare approaches.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import NoSuchNodeError, TemplateError, UnparseableLabel
from .kg import KnowledgeGraph, MetapathSubgraph, enumerate_subgraphs
from .llm import CAUSAL, CompletionRequest, label_probability
from .ltr.models import RANDOM, SIMILARITY, RankerModel, rank_subgraphs
from .ltr.ngram import NgramLM
from .relevance import DEFAULT_INSTRUCTION, PairInstance
from .verbalize import PLAIN_ARROWS_STYLE, VerbalizationStyle, verbalize

logger = logging.getLogger(__name__)

DEFAULT_DISCOVERY_TEMPLATE = (
    "{instruction}\n\n"
    "[Textual context]:\n{context}\n\n"
    "[Relation Paths]:\n{paths}\n\n"
    "The relation between {a} and {b} is"
)

_DISCOVERY_PLACEHOLDERS = ("{instruction}", "{context}", "{paths}", "{a}", "{b}")

BASELINE_RANDOM = "random"
BASELINE_SIMILARITY = "similarity"
BASELINE_PERMUTATION = "permutation"
BASELINE_KINDS = (BASELINE_RANDOM, BASELINE_SIMILARITY, BASELINE_PERMUTATION)

_BRACKETED_INT = re.compile(r"\[(\d+)\]")


@dataclass(frozen=True)
class DiscoveryPrompt:
    """The assembled zero-shot prompt and its ingredients."""

    instruction: str
    context: str
    subgraph_block: str
    pair: tuple[str, str]
    template: str = DEFAULT_DISCOVERY_TEMPLATE

    def render(self) -> str:
        for placeholder in _DISCOVERY_PLACEHOLDERS:
            if placeholder not in self.template:
                raise TemplateError(f"template is missing placeholder {placeholder}")
        return self.template.format(
            instruction=self.instruction,
            context=self.context,
            paths=self.subgraph_block,
            a=self.pair[0],
            b=self.pair[1],
        )


@dataclass(frozen=True)
class CausalPrediction:
    """Predicted label and confidence for one pair; predicted is None when
    the generated text named no label."""

    qid: str
    predicted: Optional[str]
    p: float
    subgraphs_used: tuple[str, ...]
    backend_id: str

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")

    def to_dict(self) -> dict:
        return {"qid": self.qid, "predicted": self.predicted, "p": self.p,
                "subgraphs_used": list(self.subgraphs_used), "backend_id": self.backend_id}

    @classmethod
    def from_dict(cls, d: dict) -> "CausalPrediction":
        return cls(qid=str(d["qid"]), predicted=d.get("predicted"), p=float(d["p"]),
                   subgraphs_used=tuple(d.get("subgraphs_used", ())),
                   backend_id=d.get("backend_id", ""))


@dataclass(frozen=True)
class DiscoveryConfig:
    """Knobs for the per-pair classification pipeline."""

    k: int = 1
    max_hops: int = 4
    candidate_limit: Optional[int] = 64
    seed: int = 0
    style: VerbalizationStyle = PLAIN_ARROWS_STYLE
    template: str = DEFAULT_DISCOVERY_TEMPLATE
    instruction: str = DEFAULT_INSTRUCTION


def select_top_k(scored: Sequence[tuple[MetapathSubgraph, float]], k: int
                 ) -> list[MetapathSubgraph]:
    """First k subgraphs by descending score; stable under ties."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(scored)), key=lambda i: (-scored[i][1], i))
    return [scored[i][0] for i in order[:k]]


def build_discovery_prompt(instance: PairInstance,
                           top_subgraphs: Sequence[MetapathSubgraph],
                           style: VerbalizationStyle = PLAIN_ARROWS_STYLE,
                           template: str = DEFAULT_DISCOVERY_TEMPLATE,
                           instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Zero-shot prompt with one verbalized path per line (possibly none)."""
    block = "\n".join(verbalize(sg, style) for sg in top_subgraphs)
    prompt = DiscoveryPrompt(
        instruction=instruction,
        context=instance.context,
        subgraph_block=block,
        pair=(instance.e1, instance.e2),
        template=template,
    )
    return prompt.render()


def classify_pair(instance: PairInstance, kg: Optional[KnowledgeGraph],
                  ranker: Optional[RankerModel], backend,
                  config: DiscoveryConfig = DiscoveryConfig(),
                  lm: Optional[NgramLM] = None,
                  candidates: Optional[Sequence[MetapathSubgraph]] = None
                  ) -> CausalPrediction:
    """Enumerate, rank, prompt, and parse for one pair.

    Pairs without any subgraph (or with names missing from the graph) fall
    back to the bare prompt.  Pass ``candidates`` to skip enumeration.
    ``ranker=None`` also produces the bare prompt (the no-subgraph setting).
    """
    if candidates is None:
        if kg is None:
            candidates = []
        else:
            try:
                candidates = enumerate_subgraphs(
                    kg, (instance.e1, instance.e2), max_hops=config.max_hops,
                    limit=config.candidate_limit, seed=config.seed)
            except NoSuchNodeError:
                candidates = []

    if ranker is not None and candidates:
        scored = rank_subgraphs(ranker, (instance.e1, instance.e2), candidates, lm)
        top = select_top_k(scored, config.k)
    else:
        top = []

    prompt = build_discovery_prompt(instance, top, style=config.style,
                                    template=config.template,
                                    instruction=config.instruction)
    try:
        completion = backend.complete(CompletionRequest(prompt=prompt, want_logprobs=True))
    except Exception as exc:
        exc.args = (f"qid {instance.qid}: {exc}",)
        raise
    try:
        label, p = label_probability(completion)
    except UnparseableLabel:
        label, p = None, 0.0
    return CausalPrediction(
        qid=instance.qid,
        predicted=label,
        p=p,
        subgraphs_used=tuple(verbalize(sg, config.style) for sg in top),
        backend_id=completion.backend_id,
    )


def parse_permutation(text: str, k: int) -> list[int]:
    """Bracketed 1-based indices in order of appearance, repaired into a
    full permutation: duplicates keep the first occurrence, out-of-range
    values are dropped, missing indices are appended in ascending order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = []
    for match in _BRACKETED_INT.finditer(text):
        idx = int(match.group(1))
        if 1 <= idx <= k and idx not in seen:
            seen.append(idx)
    for idx in range(1, k + 1):
        if idx not in seen:
            seen.append(idx)
    return seen


DEFAULT_PERMUTATION_TEMPLATE = (
    "You are an assistant that ranks relation paths by how useful they are "
    "for inferring a causal relationship between an entity pair.\n\n"
    "Rank the {k} paths between the pair ({a}, {b}), most useful first.\n\n"
    "{paths}\n\n"
    "Answer with the ranking in the form [2] > [1] > [3].\n\nRanking:"
)


def permutation_rank_prompt(pair: tuple[str, str],
                            subgraphs: Sequence[MetapathSubgraph],
                            style: VerbalizationStyle = PLAIN_ARROWS_STYLE,
                            template: str = DEFAULT_PERMUTATION_TEMPLATE) -> str:
    lines = [f"[{i}] {verbalize(sg, style)}" for i, sg in enumerate(subgraphs, start=1)]
    return template.format(k=len(subgraphs), a=pair[0], b=pair[1], paths="\n".join(lines))


def baseline_rank(kind: str, pair: tuple[str, str],
                  subgraphs: Sequence[MetapathSubgraph], *,
                  seed: int = 0, lm: Optional[NgramLM] = None, backend=None,
                  style: VerbalizationStyle = PLAIN_ARROWS_STYLE
                  ) -> list[MetapathSubgraph]:
    """Order candidates with one of the reference strategies.

    random needs a seed, similarity a language model, permutation a backend.
    A permutation reply that names no index falls back to the input order
    (and logs a warning).
    """
    if not subgraphs:
        raise ValueError("subgraphs must be non-empty")
    if kind == BASELINE_RANDOM:
        model = RankerModel(kind=RANDOM, seed=seed)
        return [sg for sg, _ in rank_subgraphs(model, pair, subgraphs)]
    if kind == BASELINE_SIMILARITY:
        model = RankerModel(kind=SIMILARITY, seed=seed)
        return [sg for sg, _ in rank_subgraphs(model, pair, subgraphs, lm)]
    if kind == BASELINE_PERMUTATION:
        prompt = permutation_rank_prompt(pair, subgraphs, style=style)
        completion = backend.complete(CompletionRequest(prompt=prompt, max_tokens=64,
                                                        want_logprobs=False))
        if not _BRACKETED_INT.search(completion.text):
            logger.warning("permutation reply named no index; keeping input order")
            return list(subgraphs)
        order = parse_permutation(completion.text, len(subgraphs))
        return [subgraphs[i - 1] for i in order]
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass(frozen=True)
class ClassificationMetrics:
    """Precision/recall/F1 on the percent scale, with the confusion counts.

    ``degenerate`` flags a precision or recall that was pinned to 100
    because its denominator was zero.
    """

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "degenerate": list(self.degenerate)}


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean on whatever scale the inputs share."""
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> ClassificationMetrics:
    degenerate = []
    if tp + fp > 0:
        precision = 100.0 * tp / (tp + fp)
    else:
        precision = 100.0
        degenerate.append("precision")
    if tp + fn > 0:
        recall = 100.0 * tp / (tp + fn)
    else:
        recall = 100.0
        degenerate.append("recall")
    return ClassificationMetrics(precision=precision, recall=recall,
                                 f1=f1_score(precision, recall),
                                 tp=tp, fp=fp, fn=fn, tn=tn,
                                 degenerate=tuple(degenerate))


def evaluate_classification(predictions: Sequence[CausalPrediction],
                            golds: Union[Mapping[str, str], Sequence[PairInstance]]
                            ) -> ClassificationMetrics:
    """P/R/F1 with the causal label as the positive class.

    Predictions and golds must cover the same qids.  A prediction without a
    recognizable label counts as wrong whatever the gold label is: a miss on
    causal gold, a false alarm on non-causal gold.
    """
    if not isinstance(golds, Mapping):
        golds = {inst.qid: inst.groundtruth for inst in golds}
    pred_qids = {p.qid for p in predictions}
    if pred_qids != set(golds):
        missing = sorted(set(golds) ^ pred_qids)
        raise ValueError(f"prediction/gold qid mismatch, first difference: {missing[0]!r}")
    tp = fp = fn = tn = 0
    for pred in predictions:
        gold_causal = golds[pred.qid] == CAUSAL
        if pred.predicted is None:
            if gold_causal:
                fn += 1
            else:
                fp += 1
        elif pred.predicted == CAUSAL:
            if gold_causal:
                tp += 1
            else:
                fp += 1
        else:
            if gold_causal:
                fn += 1
            else:
                tn += 1
    return metrics_from_counts(tp, fp, fn, tn)


def aggregate_graph(pair_labels: Mapping[tuple[str, str], Optional[str]],
                    variables: Sequence[str]) -> np.ndarray:
    """Binary adjacency matrix over the ordered variable pairs.

    Entry (i, j) is 1 exactly when the pair (variables[i], variables[j]) was
    predicted causal; the diagonal is zero and unseen pairs stay zero.
    """
    n = len(variables)
    adj = np.zeros((n, n), dtype=np.int64)
    for i, a in enumerate(variables):
        for j, b in enumerate(variables):
            if i != j and pair_labels.get((a, b)) == CAUSAL:
                adj[i, j] = 1
    return adj


def hamming_distance(adj: np.ndarray, gold_adj: np.ndarray) -> tuple[int, float]:
    """(mismatch count over all n*n cells, count normalized by n*n)."""
    adj = np.asarray(adj)
    gold_adj = np.asarray(gold_adj)
    if adj.shape != gold_adj.shape or adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency matrices must be square and equally sized")
    for m in (adj, gold_adj):
        if not np.isin(m, (0, 1)).all():
            raise ValueError("adjacency matrices must be binary")
        if np.trace(np.abs(m)) != 0:
            raise ValueError("adjacency matrices must have a zero diagonal")
    n = adj.shape[0]
    hd = int(np.sum(adj != gold_adj))
    return hd, hd / (n * n)


@dataclass(frozen=True)
class GraphMetrics:
    hd: int
    nhd: float
    n: int

    def to_dict(self) -> dict:
        return {"hd": self.hd, "nhd": self.nhd, "n": self.n}


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregate metrics for one experiment."""

    classification: ClassificationMetrics
    ranking: dict = field(default_factory=dict)
    graph: Optional[GraphMetrics] = None

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.to_dict(),
            "ranking": self.ranking,
            "graph": self.graph.to_dict() if self.graph else None,
        }


def read_predictions(path) -> list[CausalPrediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(CausalPrediction.from_dict(json.loads(line)))
    return out
