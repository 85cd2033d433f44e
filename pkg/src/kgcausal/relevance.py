"""Subgraph relevance estimation.

Each candidate subgraph for a variable pair is embedded in a classification
prompt; a subgraph counts as informative when the backend then predicts the
pair's true label.  The relevance score is 1 + p for a correct prediction
and 1 - p for a wrong one, where p is the label probability, so scores live
in [0, 2] with 1.0 the no-signal midpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import (
    BackendRejected,
    BackendUnavailable,
    EmptyCandidatesError,
    NoSuchNodeError,
    TemplateError,
    UnparseableLabel,
)
from .kg import KnowledgeGraph, MetapathSubgraph, enumerate_subgraphs, sample_subgraphs
from .llm import CAUSAL, NON_CAUSAL, CompletionRequest, label_probability
from .verbalize import HYPHEN_STYLE, verbalize

logger = logging.getLogger(__name__)

LABELS = (CAUSAL, NON_CAUSAL)

DEFAULT_INSTRUCTION = (
    "Given the following information, classify the relation between the pair. "
    "If there is a cause-effect relationship, state causal; otherwise, state non-causal."
)

DEFAULT_SRE_TEMPLATE = (
    "{instruction}\n\n"
    "[Pair]:\n{pair}\n\n"
    "[Textual context]:\n{context}\n\n"
    "[Relation Paths]: {paths}\n\n"
    "[Relation]: "
)

_SRE_PLACEHOLDERS = ("{instruction}", "{pair}", "{context}", "{paths}")

DEFAULT_K_MAX = 10


@dataclass(frozen=True)
class PairInstance:
    """One labeled variable pair with its textual context."""

    qid: str
    e1: str
    e2: str
    context: str
    groundtruth: str

    def __post_init__(self):
        if self.e1 == self.e2:
            raise ValueError(f"{self.qid}: pair variables must differ")
        if self.groundtruth not in LABELS:
            raise ValueError(f"{self.qid}: groundtruth must be one of {LABELS}")

    def to_dict(self) -> dict:
        return {"qid": self.qid, "e1": self.e1, "e2": self.e2,
                "context": self.context, "label": self.groundtruth}

    @classmethod
    def from_dict(cls, d: dict) -> "PairInstance":
        return cls(qid=str(d["qid"]), e1=d["e1"], e2=d["e2"],
                   context=d.get("context", ""), groundtruth=d["label"])


@dataclass(frozen=True)
class RelevanceScore:
    """Outcome of scoring one (pair, subgraph) prompt."""

    s: float
    p: float
    predicted: Optional[str]
    correct: bool
    mean_logprob: Optional[float]

    def __post_init__(self):
        if not 0.0 <= self.s <= 2.0:
            raise ValueError(f"relevance score {self.s} outside [0, 2]")


@dataclass(frozen=True)
class RankedMetapath:
    """One scored path inside a ranked-pair record.

    ``probscore`` is the raw mean token log-probability behind ``relscore``;
    it is None when the backend output carried no recognizable label.
    """

    pathid: int
    relscore: float
    probscore: Optional[float]
    relevant: str
    stops: str
    reltypes: str
    nodelabels: str

    def to_dict(self) -> dict:
        return {
            "pathid": self.pathid,
            "relscore": self.relscore,
            "probscore": self.probscore,
            "relevant": self.relevant,
            "stops": self.stops,
            "reltypes": self.reltypes,
            "nodelabels": self.nodelabels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankedMetapath":
        return cls(
            pathid=int(d["pathid"]),
            relscore=float(d["relscore"]),
            probscore=None if d.get("probscore") is None else float(d["probscore"]),
            relevant=str(d["relevant"]),
            stops=d["stops"],
            reltypes=d["reltypes"],
            nodelabels=d["nodelabels"],
        )


@dataclass(frozen=True)
class RankedPairRecord:
    """A variable pair with its subgraphs sorted by descending relevance."""

    qid: str
    e1: str
    e2: str
    groundtruth: str
    metapaths: tuple[RankedMetapath, ...]

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "e1": self.e1,
            "e2": self.e2,
            "groundtruth": self.groundtruth,
            "metapaths": [m.to_dict() for m in self.metapaths],
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RankedPairRecord":
        return cls(
            qid=str(d["qid"]),
            e1=d["e1"],
            e2=d["e2"],
            groundtruth=str(d["groundtruth"]),
            metapaths=tuple(RankedMetapath.from_dict(m) for m in d["metapaths"]),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "RankedPairRecord":
        return cls.from_dict(json.loads(line))


def encode_groundtruth(label: str) -> str:
    return "1" if label == CAUSAL else "0"


def build_sre_prompt(instance: PairInstance, subgraph: MetapathSubgraph,
                     template: str = DEFAULT_SRE_TEMPLATE,
                     instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Fill the relevance-estimation template for one candidate path."""
    for placeholder in _SRE_PLACEHOLDERS:
        if placeholder not in template:
            raise TemplateError(f"template is missing placeholder {placeholder}")
    return template.format(
        instruction=instruction,
        pair=f"{instance.e1} and {instance.e2}",
        context=instance.context,
        paths=verbalize(subgraph, HYPHEN_STYLE),
    )


def score_subgraph(instance: PairInstance, subgraph: MetapathSubgraph, backend,
                   template: str = DEFAULT_SRE_TEMPLATE,
                   instruction: str = DEFAULT_INSTRUCTION) -> RelevanceScore:
    """Score one candidate: 1 + p when the backend is right, 1 - p when wrong.

    Output that names no label counts as a wrong prediction with p = 0,
    which lands exactly on the score midpoint 1.0.
    """
    prompt = build_sre_prompt(instance, subgraph, template=template, instruction=instruction)
    completion = backend.complete(CompletionRequest(prompt=prompt, want_logprobs=True))
    try:
        label, p = label_probability(completion)
    except UnparseableLabel:
        return RelevanceScore(s=1.0, p=0.0, predicted=None, correct=False, mean_logprob=None)
    correct = label == instance.groundtruth
    s = 1.0 + p if correct else 1.0 - p
    return RelevanceScore(s=s, p=p, predicted=label, correct=correct,
                          mean_logprob=math.log(p) if p > 0 else None)


def rank_pair(instance: PairInstance, subgraphs: Sequence[MetapathSubgraph], backend,
              template: str = DEFAULT_SRE_TEMPLATE,
              instruction: str = DEFAULT_INSTRUCTION) -> RankedPairRecord:
    """Score every candidate and emit the record sorted by descending score.

    Ties keep the original candidate order; path ids are assigned 1..k in
    the sorted order.
    """
    if not subgraphs:
        raise EmptyCandidatesError(f"{instance.qid}: no candidate subgraphs")
    scores = [score_subgraph(instance, sg, backend, template=template, instruction=instruction)
              for sg in subgraphs]
    order = sorted(range(len(subgraphs)), key=lambda i: (-scores[i].s, i))
    metapaths = []
    for rank, idx in enumerate(order, start=1):
        sg, sc = subgraphs[idx], scores[idx]
        metapaths.append(RankedMetapath(
            pathid=rank,
            relscore=sc.s,
            probscore=sc.mean_logprob,
            relevant="1" if sc.correct else "0",
            stops=" - ".join(sg.node_names),
            reltypes=" - ".join(sg.edge_labels),
            nodelabels=" - ".join(sg.node_types),
        ))
    return RankedPairRecord(
        qid=instance.qid,
        e1=instance.e1,
        e2=instance.e2,
        groundtruth=encode_groundtruth(instance.groundtruth),
        metapaths=tuple(metapaths),
    )


@dataclass(frozen=True)
class DatasetSummary:
    """What a ranked-dataset build did."""

    pairs_total: int
    records_written: int
    skipped_no_subgraphs: int
    skipped_backend_error: int
    backend_calls: int

    def to_dict(self) -> dict:
        return {
            "pairs_total": self.pairs_total,
            "records_written": self.records_written,
            "skipped_no_subgraphs": self.skipped_no_subgraphs,
            "skipped_backend_error": self.skipped_backend_error,
            "backend_calls": self.backend_calls,
        }


def _sub_seed(seed: int, *parts) -> int:
    digest = hashlib.blake2b(
        "\x1f".join([str(seed), *map(str, parts)]).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def candidate_subgraphs(instance: PairInstance, kg: KnowledgeGraph, max_hops: int = 4,
                        candidate_limit: Optional[int] = 64, k_max: int = DEFAULT_K_MAX,
                        seed: int = 0) -> list[MetapathSubgraph]:
    """Shortest-path candidates for one pair, capped to k_max by sampling."""
    try:
        found = enumerate_subgraphs(kg, (instance.e1, instance.e2), max_hops=max_hops,
                                    limit=candidate_limit,
                                    seed=_sub_seed(seed, "enumerate", instance.qid))
    except NoSuchNodeError:
        return []
    return sample_subgraphs(found, k_max, seed=_sub_seed(seed, "sample", instance.qid))


def build_ranked_dataset(instances: Sequence[PairInstance], kg: KnowledgeGraph, backend,
                         out_path, max_hops: int = 4, candidate_limit: Optional[int] = 64,
                         k_max: int = DEFAULT_K_MAX, seed: int = 0,
                         template: str = DEFAULT_SRE_TEMPLATE,
                         instruction: str = DEFAULT_INSTRUCTION) -> DatasetSummary:
    """Write one ranked record per instance that has at least one subgraph.

    Pairs without any path (or with unresolvable names) are skipped and
    counted; a backend failure on one pair skips that pair rather than
    aborting the run.  Output order follows input order, so a rerun with the
    same seed and a deterministic backend reproduces the file byte for byte.
    """
    jobs: list[tuple[PairInstance, list[MetapathSubgraph]]] = []
    skipped_no_subgraphs = 0
    for instance in instances:
        candidates = candidate_subgraphs(instance, kg, max_hops=max_hops,
                                         candidate_limit=candidate_limit,
                                         k_max=k_max, seed=seed)
        if not candidates:
            skipped_no_subgraphs += 1
            continue
        jobs.append((instance, candidates))

    def run_job(job):
        instance, candidates = job
        try:
            record = rank_pair(instance, candidates, backend,
                               template=template, instruction=instruction)
            return record, len(candidates)
        except (BackendUnavailable, BackendRejected) as exc:
            logger.warning("skipping %s: %s", instance.qid, exc)
            return None, len(candidates)

    parallelism = max(1, getattr(backend, "parallelism", 1))
    if parallelism > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run_job, jobs))
    else:
        outcomes = [run_job(j) for j in jobs]

    records_written = 0
    skipped_backend = 0
    backend_calls = 0
    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for record, calls in outcomes:
            backend_calls += calls
            if record is None:
                skipped_backend += 1
                continue
            fh.write(record.to_json_line() + "\n")
            records_written += 1

    return DatasetSummary(
        pairs_total=len(instances),
        records_written=records_written,
        skipped_no_subgraphs=skipped_no_subgraphs,
        skipped_backend_error=skipped_backend,
        backend_calls=backend_calls,
    )


def read_instances(path) -> list[PairInstance]:
    """Parse a JSON Lines instance file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PairInstance.from_dict(json.loads(line)))
    return out


def read_ranked_dataset(path) -> list[RankedPairRecord]:
    """Parse a ranked-dataset JSON Lines file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RankedPairRecord.from_json_line(line))
    return out
