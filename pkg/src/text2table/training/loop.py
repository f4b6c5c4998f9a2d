"""Batched training with the permuted-cell objective and the count head.

Every source of randomness is derived statelessly from (seed, step), so a
resumed run continues bit-identically to an uninterrupted one: batch
composition, per-example cell orderings and dropout all re-derive from the
step number alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..corpus import DatasetRecord
from ..decoding import DecodingConfig, decode_table
from ..metrics import AlignmentMode, score_corpus
from ..model import TextToTableModel, collate_instances, save_checkpoint
from ..numerics import AdamW, Tensor, backward, clip_grad_norm, ops
from ..vocab import PAD
from .passes import TrainingExample, build_fixed_causal_pass, build_training_pass
from .permutation import sample_permutation

STREAM_BATCH, STREAM_PLAN, STREAM_DROPOUT, STREAM_EVAL = 0, 1, 2, 3


def step_rng(seed: int, step: int, stream: int, extra: tuple[int, ...] = ()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, step, stream, *extra]))


@dataclass
class TrainingConfig:
    seed: int = 0
    steps: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-5
    label_smoothing: float = 0.1
    count_loss_weight: float = 1.0
    clip_norm: float = 1.0
    eval_every: int = 0
    checkpoint_dir: str | None = None
    mode: str = "permuted"  # permuted | fixed-causal | semi-templated
    eval_decode_examples: int = 24

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, d: dict) -> "TrainingConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, example_ids: list[str], components: dict):
        self.step = step
        self.example_ids = example_ids
        self.components = components
        super().__init__(
            f"non-finite loss at step {step}: {components} (examples {example_ids[:8]})"
        )


def build_source_batch(examples: list[TrainingExample]) -> tuple[np.ndarray, np.ndarray]:
    s_max = max((len(e.source_ids) for e in examples), default=1)
    ids = np.full((len(examples), max(s_max, 1)), PAD, dtype=np.int64)
    real = np.zeros_like(ids, dtype=bool)
    for i, e in enumerate(examples):
        ids[i, : len(e.source_ids)] = e.source_ids
        real[i, : len(e.source_ids)] = True
    return ids, real


@dataclass
class StepStats:
    step: int
    nll: float
    mse: float
    total: float


class Trainer:
    def __init__(
        self,
        model: TextToTableModel,
        train_examples: list[TrainingExample],
        cfg: TrainingConfig,
        *,
        val_records: list[DatasetRecord] | None = None,
        val_examples: list[TrainingExample] | None = None,
        eval_decoding: DecodingConfig | None = None,
        metrics_path: str | None = None,
        run_config: dict | None = None,
        start_step: int = 0,
        optimizer: AdamW | None = None,
    ):
        if not train_examples:
            raise ValueError("no training examples")
        self.model = model
        self.examples = train_examples
        self.cfg = cfg
        self.val_records = val_records or []
        self.val_examples = val_examples or []
        self.eval_decoding = eval_decoding or DecodingConfig()
        self.metrics_path = metrics_path
        self.run_config = run_config
        self.step = start_step
        self.opt = optimizer or AdamW(
            model.params, lr=cfg.lr, weight_decay=cfg.weight_decay
        )

    # ------------------------------------------------------------------

    def _instances_for(self, batch: list[TrainingExample], step: int):
        insts, owners = [], []
        for slot, ex in enumerate(batch):
            if ex.n_rows == 0:
                continue  # empty tables train only the count head
            if self.cfg.mode == "fixed-causal":
                inst = build_fixed_causal_pass(ex, self.model)
            else:
                rng = step_rng(self.cfg.seed, step, STREAM_PLAN, (slot,))
                plan = sample_permutation(ex.n_rows, ex.n_cols, rng)
                inst = build_training_pass(ex, plan, self.model)
            insts.append(inst)
            owners.append(slot)
        return insts, owners

    def _batch_loss(
        self, batch: list[TrainingExample], step: int, train: bool
    ) -> tuple[Tensor, Tensor, Tensor]:
        """(total, nll, mse) tensors for one example batch."""
        cfg = self.cfg
        rng = step_rng(cfg.seed, step, STREAM_DROPOUT) if train else None
        ids, real = build_source_batch(batch)
        memory = self.model.encode(ids, real, train=train, rng=rng)

        counts = np.array([ex.count_target for ex in batch], dtype=self.model.cfg.dtype)
        mse = ops.mse(self.model.count_pred(memory), counts)

        insts, owners = self._instances_for(batch, step)
        if insts:
            dec_batch = collate_instances(insts, self.model.cfg)
            s = memory.shape[1]
            gather = np.concatenate([np.arange(s, dtype=np.int64) + o * s for o in owners])
            flat = ops.reshape(memory, (memory.shape[0] * s, memory.shape[2]))
            sub_memory = ops.reshape(
                ops.take_rows(flat, gather), (len(owners), s, memory.shape[2])
            )
            hidden = self.model.decoder_hidden(
                sub_memory, real[owners], dec_batch, train=train, rng=rng
            )
            pos, tgt, _, legal, _ = dec_batch.flat_loss_arrays()
            logits = self.model.logits_at(hidden, pos)
            weights = np.full(len(pos), 1.0 / max(len(pos), 1), dtype=self.model.cfg.dtype)
            nll = ops.cross_entropy(
                logits, tgt, smoothing=cfg.label_smoothing, legal=legal, weights=weights
            )
        else:
            nll = Tensor(np.asarray(0.0, dtype=self.model.cfg.dtype))
        total = ops.add(nll, ops.scale(mse, cfg.count_loss_weight))
        return total, nll, mse

    def training_step(self, step: int) -> StepStats:
        cfg = self.cfg
        rng = step_rng(cfg.seed, step, STREAM_BATCH)
        idx = rng.integers(0, len(self.examples), size=cfg.batch_size)
        batch = [self.examples[int(i)] for i in idx]

        self.model.params.zero_grad()
        total, nll, mse = self._batch_loss(batch, step, train=True)
        stats = StepStats(step, nll.item(), mse.item(), total.item())
        if not np.isfinite(stats.total):
            self._dump_divergence(step, batch, stats)
            raise TrainingDiverged(
                step, [ex.id for ex in batch], {"nll": stats.nll, "mse": stats.mse}
            )
        backward(total)
        clip_grad_norm(self.model.params, cfg.clip_norm)
        self.opt.step()
        return stats

    def _dump_divergence(self, step: int, batch: list[TrainingExample], stats: StepStats) -> None:
        if not self.cfg.checkpoint_dir:
            return
        os.makedirs(self.cfg.checkpoint_dir, exist_ok=True)
        path = os.path.join(self.cfg.checkpoint_dir, f"diverged-step{step}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "step": step,
                    "example_ids": [ex.id for ex in batch],
                    "nll": stats.nll,
                    "mse": stats.mse,
                    "total": stats.total,
                },
                fh,
                indent=2,
            )

    # ------------------------------------------------------------------

    def evaluate(self, step: int) -> dict:
        """Validation NLL/MSE plus decoded cell F1 and row-count accuracy."""
        out = {"step": step, "nll": None, "mse": None, "cell_f1": None, "count_accuracy": None}
        if self.val_examples:
            cap = min(len(self.val_examples), max(self.cfg.batch_size, 8))
            _, nll, mse = self._batch_loss(self.val_examples[:cap], 0, train=False)
            out["nll"] = nll.item()
            out["mse"] = mse.item()
        if self.val_records:
            cap = min(len(self.val_records), self.cfg.eval_decode_examples)
            pairs = []
            for rec in self.val_records[:cap]:
                result = decode_table(
                    rec.text, self.model, self.eval_decoding, rec.table.headers
                )
                pairs.append((result.table, rec.table))
            score = score_corpus(pairs, AlignmentMode.assignment())
            out["cell_f1"] = score.counts.f1
            out["count_accuracy"] = score.count_accuracy
        return out

    def _log_metrics(self, record: dict) -> None:
        if not self.metrics_path:
            return
        with open(self.metrics_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _checkpoint(self) -> None:
        if not self.cfg.checkpoint_dir:
            return
        os.makedirs(self.cfg.checkpoint_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(self.cfg.checkpoint_dir, "latest.npz"),
            self.model,
            step=self.step,
            optimizer=self.opt,
            run_config=self.run_config,
        )

    def run(self, stop_when=None) -> list[dict]:
        """Train to cfg.steps; returns the eval history. `stop_when(evals)`
        may end the run early (used by convergence-style tests)."""
        history: list[dict] = []
        while self.step < self.cfg.steps:
            self.step += 1
            self.training_step(self.step)
            if self.cfg.eval_every and self.step % self.cfg.eval_every == 0:
                record = self.evaluate(self.step)
                history.append(record)
                self._log_metrics(record)
                self._checkpoint()
                if stop_when is not None and stop_when(history):
                    break
        self._checkpoint()
        return history
