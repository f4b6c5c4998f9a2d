"""Implementations behind the command-line subcommands."""

from __future__ import annotations

import json
import os

import numpy as np

from ..corpus import (
    CorpusError,
    CorpusSpec,
    DataFormatError,
    DatasetRecord,
    build_vocab,
    generate,
    read_jsonl,
    record_to_line,
    write_jsonl,
)
from ..decoding import DecodingConfig, decode_table
from ..metrics import AlignmentMode, score_corpus
from ..model import (
    CheckpointError,
    LayoutError,
    ModelConfig,
    TextToTableModel,
    load_checkpoint,
)
from ..numerics import AdamW
from ..training import Trainer, TrainingConfig, prepare_example
from .runconfig import (
    ConfigError,
    apply_env_seed,
    apply_overrides,
    canonical_json,
    config_hash,
    file_sha256,
    load_json_config,
    merged_run_config,
)


class DataError(RuntimeError):
    """Exit code 2: dataset or report input problems."""


class ModelError(RuntimeError):
    """Exit code 3: model or checkpoint problems."""


def _read_records(path: str) -> list[DatasetRecord]:
    if not os.path.exists(path):
        raise DataError(f"dataset not found: {path}")
    try:
        return list(read_jsonl(path))
    except DataFormatError as exc:
        raise DataError(str(exc)) from None


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(spec_path: str, out_path: str) -> int:
    raw = load_json_config(spec_path)
    raw = apply_env_seed(raw) if "seed" in raw or os.environ.get("STABLE_SEED") else raw
    try:
        spec = CorpusSpec.from_json(raw)
    except (CorpusError, TypeError) as exc:
        raise DataError(f"bad corpus spec: {exc}") from None
    try:
        n = write_jsonl(generate(spec), out_path)
    except (CorpusError, OSError) as exc:
        raise DataError(f"generation failed: {exc}") from None
    print(f"wrote {n} records to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _build_model_and_examples(cfg: dict, records, mode: str):
    model_cfg_dict = dict(cfg.get("model", {}))
    vocab = build_vocab(records, n_max_rows=model_cfg_dict.get("max_rows", 5))
    model_cfg_dict["vocab_size"] = len(vocab)
    model_cfg = ModelConfig.from_json(model_cfg_dict)
    model = TextToTableModel(model_cfg, vocab, seed=cfg["seed"])
    try:
        examples = [prepare_example(r, vocab, model_cfg, mode) for r in records]
    except LayoutError as exc:
        raise DataError(str(exc)) from None
    return model, examples


def cmd_train(config_path: str, overrides: list[str], resume: bool = False) -> int:
    cfg = merged_run_config(load_json_config(config_path))
    apply_overrides(cfg, overrides)
    apply_env_seed(cfg)
    chash = config_hash(cfg)

    paths = cfg.get("paths", {})
    data_path = paths.get("dataset")
    if not data_path:
        raise ConfigError("paths.dataset is required for train")
    records = _read_records(data_path)
    val_records = _read_records(paths["val_dataset"]) if paths.get("val_dataset") else records[:32]

    tcfg = TrainingConfig.from_json({"seed": cfg["seed"], **cfg.get("training", {})})
    ckpt_dir = paths.get("checkpoint_dir") or cfg.get("training", {}).get("checkpoint_dir")
    if ckpt_dir:
        tcfg.checkpoint_dir = ckpt_dir
        os.makedirs(ckpt_dir, exist_ok=True)
    metrics_path = os.path.join(tcfg.checkpoint_dir, "metrics.jsonl") if tcfg.checkpoint_dir else None

    run_config = {"config": cfg, "config_hash": chash, "dataset_sha256": file_sha256(data_path)}

    latest = os.path.join(tcfg.checkpoint_dir, "latest.npz") if tcfg.checkpoint_dir else None
    start_step = 0
    optimizer = None
    if resume and latest and os.path.exists(latest):
        try:
            model, meta = load_checkpoint(latest)
        except CheckpointError as exc:
            raise ModelError(str(exc)) from None
        stored = (meta.get("run_config") or {}).get("config_hash")
        if stored != chash:
            raise ModelError(
                f"refusing to resume: checkpoint config hash {str(stored)[:12]} != current {chash[:12]}"
            )
        try:
            examples = [prepare_example(r, model.vocab, model.cfg, tcfg.mode) for r in records]
        except LayoutError as exc:
            raise DataError(str(exc)) from None
        optimizer = AdamW(model.params, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
        optimizer.load_state_arrays(meta["opt_arrays"], meta["optimizer"]["step_count"])
        start_step = meta["step"]
        print(f"resuming from step {start_step}")
    else:
        model, examples = _build_model_and_examples(cfg, records, tcfg.mode)
        if metrics_path and os.path.exists(metrics_path):
            os.unlink(metrics_path)

    try:
        val_examples = [prepare_example(r, model.vocab, model.cfg, "permuted") for r in val_records]
    except LayoutError as exc:
        raise DataError(str(exc)) from None

    trainer = Trainer(
        model,
        examples,
        tcfg,
        val_records=val_records,
        val_examples=val_examples,
        eval_decoding=DecodingConfig.from_json(cfg.get("decoding", {})),
        metrics_path=metrics_path,
        run_config=run_config,
        start_step=start_step,
        optimizer=optimizer,
    )
    history = trainer.run()
    if history:
        last = history[-1]
        print(f"final eval: {json.dumps(last, sort_keys=True)}")
    print(f"trained to step {trainer.step}; config hash {chash[:12]}")
    return 0


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------


def cmd_decode(
    checkpoint_path: str,
    dataset_path: str,
    out_path: str,
    config_path: str | None = None,
    overrides: list[str] | None = None,
    trace_path: str | None = None,
) -> int:
    try:
        model, meta = load_checkpoint(checkpoint_path)
    except CheckpointError as exc:
        raise ModelError(str(exc)) from None
    dcfg_dict = load_json_config(config_path) if config_path else {}
    dcfg_dict = apply_overrides(dcfg_dict, overrides or [])
    try:
        dcfg = DecodingConfig.from_json(dcfg_dict)
    except Exception as exc:
        raise ConfigError(f"bad decoding config: {exc}") from None

    records = _read_records(dataset_path)
    preds: list[DatasetRecord] = []
    traces: list[dict] = []
    for rec in records:
        try:
            result = decode_table(rec.text, model, dcfg, rec.table.headers, keep_trace=bool(trace_path))
        except LayoutError as exc:
            raise ModelError(f"{rec.id}: {exc}") from None
        preds.append(DatasetRecord(rec.id, rec.text, result.table))
        if trace_path:
            traces.append(
                {
                    "id": rec.id,
                    "outer_iterations": result.outer_iterations,
                    "predicted_count": result.predicted_count,
                    "trace": [
                        {
                            "iteration": t.iteration,
                            "cell": list(t.cell),
                            "score": t.score,
                            "tokens": [model.vocab.surface(i) for i in t.tokens],
                            "truncated": t.truncated,
                        }
                        for t in result.trace
                    ],
                }
            )
    write_jsonl(preds, out_path)
    sidecar = {
        "checkpoint_step": meta.get("step"),
        "config_hash": (meta.get("run_config") or {}).get("config_hash"),
        "decoding": dcfg.to_json(),
        "dataset_sha256": file_sha256(dataset_path),
    }
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            for t in traces:
                fh.write(json.dumps(t, sort_keys=True) + "\n")
    print(f"decoded {len(preds)} tables to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _pretty_report(report: dict) -> str:
    rows = [("all", report)] + sorted(report["per_column"].items())
    widths = [max(len(str(name)) for name, _ in rows), 9, 9, 9]
    lines = [
        f"{'column':<{widths[0]}}  {'precision':>9}  {'recall':>9}  {'f1':>9}",
    ]
    for name, r in rows:
        lines.append(
            f"{name:<{widths[0]}}  {r['precision']:>9.4f}  {r['recall']:>9.4f}  {r['f1']:>9.4f}"
        )
    lines.append(f"count_accuracy: {report['count_accuracy']:.4f}")
    return "\n".join(lines)


def cmd_eval(
    pred_path: str,
    gold_path: str,
    mode_text: str = "assignment",
    out_path: str | None = None,
    pretty: bool = False,
    force: bool = False,
) -> int:
    try:
        mode = AlignmentMode.parse(mode_text)
    except Exception as exc:
        raise ConfigError(str(exc)) from None

    preds = _read_records(pred_path)
    golds = _read_records(gold_path)
    if len(preds) != len(golds):
        raise DataError(f"prediction count {len(preds)} != gold count {len(golds)}")

    meta_path = pred_path + ".meta.json"
    gold_hash = file_sha256(gold_path)
    pred_meta = None
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            pred_meta = json.load(fh)
        stored = pred_meta.get("dataset_sha256")
        if stored and stored != gold_hash and not force:
            raise DataError(
                f"prediction corpus hash {str(stored)[:12]} != gold {gold_hash[:12]} (use --force to override)"
            )

    try:
        score = score_corpus(
            [(p.id, p.table, g.id, g.table) for p, g in zip(preds, golds)], mode
        )
    except Exception as exc:
        raise DataError(str(exc)) from None
    report = score.report()
    report["alignment"] = mode_text
    report["gold_sha256"] = gold_hash
    report["pred_sha256"] = file_sha256(pred_path)
    if pred_meta:
        report["config_hash"] = pred_meta.get("config_hash")
    text = json.dumps(report, sort_keys=True, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if pretty:
        print(_pretty_report(report))
    else:
        print(text)
    return 0
