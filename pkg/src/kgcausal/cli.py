"""Command-line pipeline: extract, estimate, train, rank, discover, eval.

One JSON config file drives every stage; flags override config values, and
all randomness flows from the single top-level seed through named per-stage
sub-seeds.  Exit codes: 0 success, 1 completed with parse or evaluation
degradations, 2 configuration, I/O, or backend failures.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .discovery import (
    DEFAULT_DISCOVERY_TEMPLATE,
    DiscoveryConfig,
    EvaluationReport,
    GraphMetrics,
    aggregate_graph,
    classify_pair,
    evaluate_classification,
    hamming_distance,
    read_predictions,
)
from .errors import BackendRejected, BackendUnavailable, KgcausalError
from .kg import MetapathSubgraph, load_kg
from .llm import HttpBackend, MockOracle, MockOracleConfig
from .ltr.metrics import ndcg_at_k, recall_at_k
from .ltr.models import (
    GBDT,
    NEURAL,
    FeatureConfig,
    RankerModel,
    TrainConfig,
    load_model,
    ranker_input_tokens,
    record_pair,
    record_subgraphs,
    save_model,
    score_subgraphs,
    train_gbdt_ranker,
    train_neural_ranker,
)
from .ltr.ngram import train_ngram_lm
from .relevance import (
    DEFAULT_INSTRUCTION,
    DEFAULT_SRE_TEMPLATE,
    PairInstance,
    RankedPairRecord,
    candidate_subgraphs,
    rank_pair,
    read_instances,
    read_ranked_dataset,
)
from .verbalize import VerbalizationStyle

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DEGRADED = 1
EXIT_CONFIG = 2

DEFAULT_CONFIG: dict = {
    "kg": {"path": None, "format": "triples-jsonl", "max_hops": 4, "candidate_limit": 64},
    "llm": {"backend": "mock", "endpoint": None, "model": "", "parallelism": 1,
            "max_retries": 3, "mock_config_path": None, "credential_env": None},
    "sre": {"k_max": 10, "template_path": None},
    "ranker": {"kind": "neural", "loss": "ranknet",
               "ngram": {"n": 2, "d": 128, "epochs": 10, "lr": 0.5},
               "gbdt": {"rounds": 100, "depth": 3, "lr": 0.1},
               "train": {"epochs": 200, "lr": 0.05, "batch": 8, "seed": None,
                         "patience": None}},
    "discovery": {"k": 1, "style": "plain_arrows", "template_path": None},
    "eval": {"ks": [1, 3, 5]},
    "seed": 0,
}

_SECRET_KEY_PARTS = ("api_key", "apikey", "token", "secret", "password")


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[Path]) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise KgcausalError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise KgcausalError(f"config file {path} is not valid JSON: {exc}")
    return _deep_merge(DEFAULT_CONFIG, user)


def redact_config(config: dict) -> dict:
    def scrub(value):
        if isinstance(value, dict):
            return {k: ("***" if any(part in k.lower() for part in _SECRET_KEY_PARTS)
                        else scrub(v)) for k, v in value.items()}
        if isinstance(value, list):
            return [scrub(v) for v in value]
        return value
    return scrub(config)


def stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{stage}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def make_backend(config: dict):
    llm = config["llm"]
    if llm["backend"] == "mock":
        path = llm.get("mock_config_path")
        if not path:
            raise KgcausalError("llm.mock_config_path is required for the mock backend")
        return MockOracle(MockOracleConfig.from_json(path))
    if llm["backend"] == "http":
        if not llm.get("endpoint"):
            raise KgcausalError("llm.endpoint is required for the http backend")
        return HttpBackend(endpoint=llm["endpoint"], model=llm.get("model") or "",
                           credential_env=llm.get("credential_env"),
                           max_retries=llm.get("max_retries", 3),
                           parallelism=llm.get("parallelism", 1))
    raise KgcausalError(f"unknown llm backend {llm['backend']!r}")


def _read_template(path: Optional[str], default: str) -> str:
    if not path:
        return default
    return Path(path).read_text(encoding="utf-8")


def _write_jsonl(path: Path, rows) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def _write_meta(out: Path, command: str, config: dict, summary: dict) -> None:
    meta = {"command": command, "config": redact_config(config), "summary": summary}
    Path(str(out) + ".meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def cmd_extract(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.max_hops is not None:
        config["kg"]["max_hops"] = args.max_hops
    kg = load_kg(config["kg"]["path"], config["kg"]["format"])
    instances = read_instances(args.pairs)
    seed = stage_seed(config["seed"], "extract")

    rows = []
    with_candidates = 0
    for inst in instances:
        candidates = candidate_subgraphs(
            inst, kg, max_hops=config["kg"]["max_hops"],
            candidate_limit=config["kg"]["candidate_limit"],
            k_max=config["sre"]["k_max"], seed=seed)
        if candidates:
            with_candidates += 1
        row = inst.to_dict()
        row["subgraphs"] = [sg.to_dict() for sg in candidates]
        rows.append(row)
    _write_jsonl(args.out, rows)
    summary = {"pairs": len(instances), "pairs_with_candidates": with_candidates,
               "pairs_without_candidates": len(instances) - with_candidates}
    _write_meta(args.out, "extract", config, summary)
    logger.info("extract: %s", summary)
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    backend = make_backend(config)
    template = _read_template(config["sre"]["template_path"], DEFAULT_SRE_TEMPLATE)
    k_max = config["sre"]["k_max"]

    lines = []
    skipped_empty = 0
    backend_failures = 0
    attempted = 0
    with open(args.candidates, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    for row in rows:
        subgraphs = [MetapathSubgraph.from_dict(d) for d in row.get("subgraphs", [])]
        if not subgraphs:
            skipped_empty += 1
            continue
        inst = PairInstance.from_dict(row)
        attempted += 1
        try:
            record = rank_pair(inst, subgraphs[:k_max], backend, template=template)
        except (BackendUnavailable, BackendRejected) as exc:
            logger.warning("skipping %s: %s", inst.qid, exc)
            backend_failures += 1
            continue
        lines.append(record.to_dict())

    if attempted and backend_failures == attempted:
        logger.error("backend failed for every pair; writing no output")
        return EXIT_CONFIG
    _write_jsonl(args.out, lines)
    summary = {"pairs": len(rows), "records_written": len(lines),
               "skipped_no_subgraphs": skipped_empty,
               "skipped_backend_error": backend_failures,
               "backend_calls": getattr(backend, "calls", None)}
    _write_meta(args.out, "estimate", config, summary)
    logger.info("estimate: %s", summary)
    return EXIT_DEGRADED if backend_failures else EXIT_OK


def _train_seed(config: dict) -> int:
    explicit = config["ranker"]["train"].get("seed")
    return explicit if explicit is not None else stage_seed(config["seed"], "train")


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.kind:
        config["ranker"]["kind"] = args.kind
    if args.loss:
        config["ranker"]["loss"] = args.loss
    dataset = read_ranked_dataset(args.dataset)
    if not dataset:
        raise KgcausalError(f"ranked dataset {args.dataset} is empty")
    rcfg = config["ranker"]
    seed = _train_seed(config)

    corpus = []
    for record in dataset:
        pair = record_pair(record)
        for sg in record_subgraphs(record):
            corpus.append(ranker_input_tokens(pair, sg, include_types=True))
    lm = train_ngram_lm(corpus, n=rcfg["ngram"]["n"], d=rcfg["ngram"]["d"],
                        seed=stage_seed(seed, "ngram"),
                        epochs=rcfg["ngram"]["epochs"],
                        learning_rate=rcfg["ngram"]["lr"])

    train_config = TrainConfig(
        epochs=rcfg["train"]["epochs"], learning_rate=rcfg["train"]["lr"],
        batch=rcfg["train"]["batch"], seed=seed,
        gbdt_rounds=rcfg["gbdt"]["rounds"], gbdt_max_depth=rcfg["gbdt"]["depth"],
        gbdt_learning_rate=rcfg["gbdt"]["lr"], patience=rcfg["train"]["patience"])
    kind = rcfg["kind"]
    if kind == NEURAL:
        model = train_neural_ranker(dataset, lm, rcfg["loss"], train_config)
    elif kind == GBDT:
        model = train_gbdt_ranker(dataset, lm, train_config)
    elif kind in ("similarity", "random"):
        model = RankerModel(kind=kind, seed=seed, feature_config=FeatureConfig())
    else:
        raise KgcausalError(f"unknown ranker kind {kind!r}")

    save_model(model, args.out, lm)
    summary = {"kind": kind, "loss": model.loss_kind, "records": len(dataset),
               "lm_vocab": len(lm.vocab),
               "final_train_loss": (model.train_loss_history or model.train_rmse_history
                                    or [None])[-1]}
    _write_meta(args.out, "train", config, summary)
    logger.info("train: %s", summary)
    return EXIT_OK


def _rows_to_subgraph_sets(rows):
    """Candidate or ranked-dataset rows -> (pair instance dict, subgraphs, gains)."""
    for row in rows:
        if "metapaths" in row:
            record = RankedPairRecord.from_dict(row)
            subgraphs = record_subgraphs(record)
            gains = [mp.relscore for mp in record.metapaths]
            relevant = [mp.relevant == "1" for mp in record.metapaths]
            yield record.qid, (record.e1, record.e2), subgraphs, gains, relevant
        else:
            subgraphs = [MetapathSubgraph.from_dict(d) for d in row.get("subgraphs", [])]
            yield str(row["qid"]), (row["e1"], row["e2"]), subgraphs, None, None


def cmd_rank(args) -> int:
    config = load_config(args.config)
    model, lm = load_model(args.model)
    with open(args.candidates, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]

    out_rows = []
    for qid, pair, subgraphs, gains, relevant in _rows_to_subgraph_sets(rows):
        if not subgraphs:
            out_rows.append({"qid": qid, "order": [], "entries": []})
            continue
        scores = score_subgraphs(model, pair, subgraphs, lm)
        order = sorted(range(len(subgraphs)), key=lambda i: (-scores[i], i))
        entries = []
        for i in order:
            entry = {"stops": " - ".join(subgraphs[i].node_names),
                     "score": float(scores[i])}
            if gains is not None:
                entry["gain"] = gains[i]
                entry["relevant"] = relevant[i]
            entries.append(entry)
        out_rows.append({"qid": qid, "order": order, "entries": entries})
    _write_jsonl(args.out, out_rows)
    summary = {"pairs": len(out_rows), "model_kind": model.kind}
    _write_meta(args.out, "rank", config, summary)
    return EXIT_OK


def cmd_discover(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.k is not None:
        config["discovery"]["k"] = args.k
    backend = make_backend(config)
    instances = read_instances(args.pairs)
    kg = load_kg(config["kg"]["path"], config["kg"]["format"])

    if str(args.model).lower() == "none":
        model, lm = None, None
    else:
        model, lm = load_model(args.model)

    discovery_config = DiscoveryConfig(
        k=config["discovery"]["k"],
        max_hops=config["kg"]["max_hops"],
        candidate_limit=config["kg"]["candidate_limit"],
        seed=stage_seed(config["seed"], "discover"),
        style=VerbalizationStyle(variant=config["discovery"]["style"]),
        template=_read_template(config["discovery"]["template_path"],
                                DEFAULT_DISCOVERY_TEMPLATE),
        instruction=DEFAULT_INSTRUCTION,
    )

    rows = []
    unparseable = 0
    for inst in instances:
        prediction = classify_pair(inst, kg, model, backend,
                                   config=discovery_config, lm=lm)
        if prediction.predicted is None:
            unparseable += 1
        rows.append(prediction.to_dict())
    _write_jsonl(args.out, rows)
    summary = {"pairs": len(instances), "unparseable": unparseable,
               "backend_calls": getattr(backend, "calls", None),
               "k": discovery_config.k}
    _write_meta(args.out, "discover", config, summary)
    logger.info("discover: %s", summary)
    return EXIT_DEGRADED if unparseable else EXIT_OK


def _ranking_metrics(rankings_path: Path, ks) -> dict:
    with open(rankings_path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    scored = [r for r in rows if r["entries"] and "gain" in r["entries"][0]]
    out = {}
    for k in ks:
        ndcgs, recalls = [], []
        for row in scored:
            gains = [e["gain"] for e in row["entries"]]
            relevant = [bool(e.get("relevant")) for e in row["entries"]]
            ndcgs.append(ndcg_at_k(gains, k))
            recalls.append(recall_at_k(relevant, k, sum(relevant)))
        if scored:
            out[f"ndcg@{k}"] = sum(ndcgs) / len(ndcgs)
            out[f"recall@{k}"] = sum(recalls) / len(recalls)
    return out


def _template_hashes(config: dict) -> dict:
    """Short content hashes of the active prompt templates, for provenance."""
    out = {}
    for name, path, default in (
            ("sre", config["sre"]["template_path"], DEFAULT_SRE_TEMPLATE),
            ("discovery", config["discovery"]["template_path"],
             DEFAULT_DISCOVERY_TEMPLATE)):
        text = _read_template(path, default)
        out[name] = hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()
    return out


def cmd_eval(args) -> int:
    config = load_config(args.config)
    predictions = read_predictions(args.predictions)
    golds = read_instances(args.gold)
    classification = evaluate_classification(predictions, golds)

    ranking = {}
    if args.rankings:
        ranking = _ranking_metrics(args.rankings, config["eval"]["ks"])

    graph = None
    if args.gold_adjacency:
        doc = json.loads(Path(args.gold_adjacency).read_text(encoding="utf-8"))
        variables = doc["variables"]
        gold_matrix = doc["matrix"]
        by_qid = {inst.qid: inst for inst in golds}
        pair_labels = {}
        for pred in predictions:
            inst = by_qid[pred.qid]
            pair_labels[(inst.e1, inst.e2)] = pred.predicted
        adj = aggregate_graph(pair_labels, variables)
        hd, nhd = hamming_distance(adj, np.asarray(gold_matrix))
        graph = GraphMetrics(hd=hd, nhd=nhd, n=len(variables))

    report = EvaluationReport(classification=classification, ranking=ranking, graph=graph)
    doc = report.to_dict()
    if doc["graph"] is not None:
        # adjacency is built from independently classified ordered pairs,
        # both orientations of every unordered pair
        doc["graph"]["orientation"] = "all-ordered-pairs"
    doc["config"] = redact_config(config)
    doc["template_hashes"] = _template_hashes(config)
    tmp = Path(str(args.out) + ".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, args.out)
    logger.info("eval: P=%.2f R=%.2f F1=%.2f", classification.precision,
                classification.recall, classification.f1)
    unparseable = sum(1 for p in predictions if p.predicted is None)
    return EXIT_DEGRADED if unparseable else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcausal",
        description="Metapath retrieval, subgraph ranking, and zero-shot "
                    "causal relation classification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="pipeline config JSON (defaults apply otherwise)")
        p.add_argument("--seed", type=int, default=None, help="override the top-level seed")
        p.add_argument("--out", type=Path, required=True, help="output artifact path")
        return p

    p = common(sub.add_parser("extract", help="enumerate candidate subgraphs per pair"))
    p.add_argument("pairs", type=Path)
    p.add_argument("--max-hops", type=int, default=None)
    p.set_defaults(func=cmd_extract)

    p = common(sub.add_parser("estimate", help="score candidates into a ranked dataset"))
    p.add_argument("candidates", type=Path)
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("train", help="train a subgraph ranker"))
    p.add_argument("dataset", type=Path)
    p.add_argument("--kind", choices=["neural", "gbdt", "similarity", "random"],
                   default=None)
    p.add_argument("--loss", choices=["rmse", "ranknet", "listnet"], default=None)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("rank", help="apply a trained ranker to candidates"))
    p.add_argument("model", type=Path)
    p.add_argument("candidates", type=Path)
    p.set_defaults(func=cmd_rank)

    p = common(sub.add_parser("discover", help="zero-shot classification with top-k paths"))
    p.add_argument("model", type=str, help="model file, or 'none' for the bare prompt")
    p.add_argument("pairs", type=Path)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_discover)

    p = common(sub.add_parser("eval", help="score predictions against gold labels"))
    p.add_argument("predictions", type=Path)
    p.add_argument("gold", type=Path)
    p.add_argument("--rankings", type=Path, default=None)
    p.add_argument("--gold-adjacency", type=Path, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (KgcausalError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
