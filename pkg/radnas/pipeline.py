"""
Pipeline stages: synth -> preprocess -> train-supernet -> search ->
retrain-top -> eval -> report.

Every stage takes a StageContext and returns {artifact name: path}; `run`
in `radnas.main` wraps it with skip detection and the run manifest.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from radnas.artifacts import ArtifactRecord, context_key, require_artifact
from radnas.config import PipelineConfig
from radnas.detector import (
    CheckpointMeta,
    build_model,
    evaluate_model,
    load_checkpoint,
    save_checkpoint,
    train_fixed,
    train_supernet,
)
from radnas.evaluation import write_metric_csv
from radnas.exceptions import ArtifactMissingError
from radnas.nas import (
    SearchStore,
    build_search_space,
    evaluate_fitness,
    evolve_search,
    load_gene,
    make_cost_fn,
    random_baseline,
    save_gene,
    write_search_log,
)
from radnas.rdmap_io import RDMapDataset, make_loader, preprocess_adc, synth_generate
from radnas.utils import atomic_write_text

logger = logging.getLogger(__name__)

SUPERNET_CKPT = Path("supernet") / "supernet.pt"
SEARCH_LOG = Path("search") / "search_log.csv"
SEARCH_DB = Path("search") / "search.db"
RANKED = Path("search") / "ranked.json"
BASELINE = Path("search") / "baseline.json"
RETRAIN_SUMMARY = Path("retrain") / "summary.json"
METRICS = Path("eval") / "metrics.csv"
REPORT = Path("report") / "report.csv"


@dataclass
class StageContext:
    config: PipelineConfig
    out: Path
    config_hash: str
    inputs: Dict[str, ArtifactRecord] = field(default_factory=dict)

    def require(self, producer: str, name: str, expected: Path) -> Path:
        rec = require_artifact(self.out, producer, name, self.out / expected)
        self.inputs[f"{producer}:{name}"] = rec
        return self.out / rec.path

    @property
    def space(self):
        return build_search_space(self.config.model, reduced=self.config.search.reduced_space)


def _json_dump(path: Path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _split_manifest(ctx: StageContext, split: str) -> Path:
    config = ctx.config
    if config.dataset.source == "manifest":
        if split not in config.dataset.manifests:
            raise ArtifactMissingError(f"dataset.manifests.{split}", "no manifest configured for this split")
        path = Path(config.dataset.manifests[split])
        if not path.is_file():
            raise ArtifactMissingError(path, f"{split} manifest listed in the config")
        return path
    producer = "preprocess" if config.synth.emit_adc else "synth"
    return ctx.require(producer, f"manifest_{split}", Path("data") / split / "manifest.jsonl")


def _dataset(ctx: StageContext, split: str, train: bool) -> RDMapDataset:
    flip = ctx.config.dataset.flip_prob if train else 0.0
    return RDMapDataset(_split_manifest(ctx, split), flip_prob=flip, size=tuple(ctx.config.model.input_size), seed=ctx.config.seed)


def _load_model(ctx: StageContext, checkpoint: Path, gene=None, space=None):
    state, meta = load_checkpoint(checkpoint)
    model = build_model(ctx.config.model, gene, space=space)
    model.load_state_dict(state)
    model.eval()
    return model, meta


def stage_synth(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    if config.dataset.source != "synth":
        logger.info("[SYNTH] dataset.source is %r, nothing to synthesize", config.dataset.source)
        return {}
    manifests = synth_generate(config.synth, config.seed, ctx.out / "data")
    prefix = "adc_manifest" if config.synth.emit_adc else "manifest"
    return {f"{prefix}_{split}": path for split, path in manifests.items()}


def stage_preprocess(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    if config.dataset.source != "synth" or not config.synth.emit_adc:
        logger.info("[PREPROCESS] no raw ADC cubes configured, nothing to convert")
        return {}
    artifacts = {}
    for split, count in config.synth.split_sizes().items():
        if count == 0:
            continue
        adc_manifest = ctx.require("synth", f"adc_manifest_{split}", Path("data") / split / "adc_manifest.jsonl")
        artifacts[f"manifest_{split}"] = preprocess_adc(adc_manifest)
    return artifacts


def stage_train_supernet(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    train_set = _dataset(ctx, "train", train=True)
    space = ctx.space
    hyper = config.supernet.model_copy(update={"num_workers": config.num_workers})
    supernet, log = train_supernet(config.model, space, train_set, hyper, seed=config.seed)
    ckpt = save_checkpoint(ctx.out / SUPERNET_CKPT, supernet, CheckpointMeta(config_hash=ctx.config_hash, epoch=hyper.epochs, seed=config.seed))
    train_log = _json_dump(ctx.out / "supernet" / "train_log.json", {"losses": log.losses, "epochs": log.epoch_losses})
    return {"supernet": ckpt, "train_log": train_log}


def stage_search(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    ckpt = ctx.require("train-supernet", "supernet", SUPERNET_CKPT)
    supernet, _ = _load_model(ctx, ckpt)
    space = ctx.space
    val_set = _dataset(ctx, "val", train=False)
    recalib_set = make_loader(_dataset(ctx, "train", train=False), config.eval.batch_size, shuffle=False, seed=config.seed)
    search_cfg = config.search.model_copy(update={"seed": config.seed})

    def fitness(gene) -> float:
        return evaluate_fitness(gene, supernet, val_set, recalib_set, space, search_cfg.recalib_batches, config.eval.batch_size)

    cost_fn = make_cost_fn(space, config.model)
    store = SearchStore(ctx.out / SEARCH_DB, context_key(ctx.inputs["train-supernet:supernet"].sha256, ctx.config_hash))
    try:
        result = evolve_search(space, search_cfg, fitness, cost_fn, store=store)
    finally:
        store.close()

    artifacts: Dict[str, Path] = {"search_log": write_search_log(ctx.out / SEARCH_LOG, result.log_rows)}
    ranked = []
    for rank, candidate in enumerate(result.ranked[: config.retrain.top_n]):
        gene_path = save_gene(ctx.out / "search" / "genes" / f"rank_{rank}.json", candidate.gene, space, candidate.fitness)
        artifacts[f"gene_rank_{rank}"] = gene_path
        ranked.append({"rank": rank, "gene_id": candidate.gene.gene_id, "fitness": candidate.fitness, "params": candidate.params, "flops": candidate.flops})
    artifacts["ranked"] = _json_dump(ctx.out / RANKED, {"space_hash": space.space_hash, "best_history": result.best_history, "ranked": ranked})

    if config.eval.random_baseline:
        baseline = random_baseline(space, config.eval.random_baseline, fitness, cost_fn, seed=config.seed + 1, constraint=search_cfg.constraint())
        fitnesses = [c.fitness for c in baseline]
        artifacts["baseline"] = _json_dump(
            ctx.out / BASELINE,
            {"mean_fitness": float(np.mean(fitnesses)), "fitness": fitnesses, "gene_ids": [c.gene.gene_id for c in baseline]},
        )
        logger.info("[SEARCH] best %.4f vs random-subnet mean %.4f", result.best.fitness, float(np.mean(fitnesses)))
    return artifacts


def stage_retrain_top(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    ranked = json.loads(ctx.require("search", "ranked", RANKED).read_text(encoding="utf-8"))["ranked"]
    space = ctx.space
    train_set = _dataset(ctx, "train", train=True)
    val_set = _dataset(ctx, "val", train=False)
    hyper = config.retrain.model_copy(update={"num_workers": config.num_workers})
    artifacts: Dict[str, Path] = {}
    results = []
    for entry in ranked[: config.retrain.top_n]:
        rank = entry["rank"]
        gene = load_gene(ctx.require("search", f"gene_rank_{rank}", Path("search") / "genes" / f"rank_{rank}.json"), space)
        logger.info("[RETRAIN] training rank %d subnet %s from scratch", rank, gene.gene_id)
        model, _ = train_fixed(config.model, gene, space, train_set, hyper, seed=config.seed)
        map50 = evaluate_model(model, val_set, batch_size=config.eval.batch_size).map50
        meta = CheckpointMeta(config_hash=ctx.config_hash, gene=gene.choices, epoch=hyper.epochs, seed=config.seed)
        artifacts[f"model_rank_{rank}"] = save_checkpoint(ctx.out / "retrain" / f"rank_{rank}.pt", model, meta)
        results.append({"rank": rank, "gene_id": gene.gene_id, "choices": gene.choices, "val_map50": map50})
        logger.info("[RETRAIN] rank %d val mAP@50 %.4f", rank, map50)
    best = max(results, key=lambda r: (r["val_map50"], -r["rank"]))
    artifacts["best_model"] = artifacts[f"model_rank_{best['rank']}"]
    artifacts["summary"] = _json_dump(ctx.out / RETRAIN_SUMMARY, {"best_rank": best["rank"], "candidates": results})
    return artifacts


def stage_eval(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    summary = json.loads(ctx.require("retrain-top", "summary", RETRAIN_SUMMARY).read_text(encoding="utf-8"))
    best = next(c for c in summary["candidates"] if c["rank"] == summary["best_rank"])
    space = ctx.space
    ckpt = ctx.require("retrain-top", "best_model", Path("retrain") / f"rank_{best['rank']}.pt")
    model, _ = _load_model(ctx, ckpt, space.make_gene(best["choices"]), space)
    reports = {split: evaluate_model(model, _dataset(ctx, split, train=False), batch_size=config.eval.batch_size) for split in config.eval.splits}
    for split, report in reports.items():
        logger.info("[EVAL] %s %s", split, {k: round(v, 4) for k, v in report.summary().items()})
    return {"metrics": write_metric_csv(ctx.out / METRICS, reports)}


def stage_report(ctx: StageContext) -> Dict[str, Path]:
    config = ctx.config
    metrics = ctx.require("eval", "metrics", METRICS)
    summary = json.loads(ctx.require("retrain-top", "summary", RETRAIN_SUMMARY).read_text(encoding="utf-8"))
    ranked = json.loads(ctx.require("search", "ranked", RANKED).read_text(encoding="utf-8"))
    best = next(c for c in summary["candidates"] if c["rank"] == summary["best_rank"])
    searched = next(r for r in ranked["ranked"] if r["rank"] == best["rank"])
    rows: List[List[str]] = [
        ["search", "space_cardinality", str(ctx.space.cardinality)],
        ["search", "best_gene_id", best["gene_id"]],
        ["search", "best_rank", str(best["rank"])],
        ["search", "params", str(searched["params"])],
        ["search", "flops", str(searched["flops"])],
        ["search", "inherited_val_map50", f"{searched['fitness']:.6f}"],
        ["retrain", "val_map50", f"{best['val_map50']:.6f}"],
    ]
    if config.eval.random_baseline:
        baseline = json.loads(ctx.require("search", "baseline", BASELINE).read_text(encoding="utf-8"))
        rows.append(["search", "random_subnet_mean_map50", f"{baseline['mean_fitness']:.6f}"])
    with open(metrics, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["class"] == "all":
                rows.append([f"eval:{row['split']}", row["threshold"], row["AP"]])
    path = ctx.out / REPORT
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section", "key", "value"])
        writer.writerows(rows)
    logger.info("[CLI] report written to %s", path)
    return {"report": path}


STAGES: Dict[str, Callable[[StageContext], Dict[str, Path]]] = {
    "synth": stage_synth,
    "preprocess": stage_preprocess,
    "train-supernet": stage_train_supernet,
    "search": stage_search,
    "retrain-top": stage_retrain_top,
    "eval": stage_eval,
    "report": stage_report,
}
