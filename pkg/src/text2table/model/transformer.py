"""Encoder-decoder transformer with tabular decoder self-attention biases.

Both stacks use pre-norm blocks, ReLU feed-forwards and a shared
sequence-relative bucket bias per stack. The decoder self-attention
additionally receives the tabular bias (row/column offsets with a dedicated
header bucket) and the local within-cell bias; cross-attention carries no
position bias. A linear head on the first encoder position regresses the
number of table rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import ParameterStore, Tensor, ops
from ..vocab import PAD, Vocabulary
from .config import ModelConfig
from .layout import (
    GrammarMasks,
    LayoutInstance,
    TableTemplate,
    make_template,
    sequence_bucket_matrix,
)


@dataclass
class DecoderBatch:
    """Padded batch of layout instances ready for the decoder stack."""

    input_ids: np.ndarray  # [B, T]
    allow: np.ndarray  # [B, 1, T, T]
    pair_idx: list[tuple[np.ndarray, np.ndarray, np.ndarray]]  # per example [T,T] maps
    length: int
    instances: list[LayoutInstance]

    def flat_loss_arrays(self):
        """Concatenate loss surfaces across the batch; positions are offset
        into the flattened [B*T] hidden sequence."""
        pos, tgt, cell, legal, example = [], [], [], [], []
        for b, inst in enumerate(self.instances):
            if inst.loss_pos is None or len(inst.loss_pos) == 0:
                continue
            pos.append(inst.loss_pos + b * self.length)
            tgt.append(inst.loss_targets)
            cell.append(inst.loss_cell)
            legal.append(inst.legal)
            example.append(np.full(len(inst.loss_pos), b, dtype=np.int64))
        if not pos:
            v = self.instances[0].legal.shape[1] if self.instances else 0
            return (np.zeros(0, np.int64),) * 3 + (np.zeros((0, v), bool), np.zeros(0, np.int64))
        return (
            np.concatenate(pos),
            np.concatenate(tgt),
            np.concatenate(cell),
            np.concatenate(legal),
            np.concatenate(example),
        )


def collate_instances(instances: list[LayoutInstance], cfg: ModelConfig) -> DecoderBatch:
    t_max = max(inst.length for inst in instances)
    b = len(instances)
    ids = np.full((b, t_max), PAD, dtype=np.int64)
    allow = np.zeros((b, 1, t_max, t_max), dtype=bool)
    pair_idx = []
    for k, inst in enumerate(instances):
        t = inst.length
        ids[k, :t] = inst.input_ids
        allow[k, 0, :t, :t] = inst.visibility()
        tpl = inst.template
        if t == t_max:
            pair_idx.append((tpl.row_idx, tpl.col_idx, tpl.loc_idx))
        else:
            ri = np.zeros((t_max, t_max), dtype=np.int64)
            ci = np.zeros((t_max, t_max), dtype=np.int64)
            li = np.full((t_max, t_max), -1, dtype=np.int64)
            ri[:t, :t], ci[:t, :t], li[:t, :t] = tpl.row_idx, tpl.col_idx, tpl.loc_idx
            pair_idx.append((ri, ci, li))
    return DecoderBatch(ids, allow, pair_idx, t_max, list(instances))


class TextToTableModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed: int = 0):
        if cfg.vocab_size != len(vocab):
            raise ValueError(f"config vocab_size {cfg.vocab_size} != vocabulary size {len(vocab)}")
        self.cfg = cfg
        self.vocab = vocab
        self.grammar = GrammarMasks(vocab, cfg.max_cell_len)
        self.params = ParameterStore()
        self._template_cache: dict = {}
        self._bucket_cache: dict[int, np.ndarray] = {}
        self._init_params(np.random.default_rng(np.random.SeedSequence([seed, 0x7ab])))

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        dt = cfg.dtype
        add = self.params.add

        def linear(name, fan_in, fan_out):
            add(name, (rng.normal(size=(fan_in, fan_out)) / math.sqrt(fan_in)).astype(dt))

        def norm(name, d):
            add(f"{name}.g", np.ones(d, dtype=dt))
            add(f"{name}.b", np.zeros(d, dtype=dt))

        d, f, h = cfg.d_model, cfg.d_ff, cfg.n_heads
        add("embed", rng.normal(size=(cfg.vocab_size, d)).astype(dt))
        add("enc_beta", np.zeros((h, cfg.relative_buckets), dtype=dt))
        add("dec_beta", np.zeros((h, cfg.relative_buckets), dtype=dt))
        add("tab_row", np.zeros((h, 2 * cfg.max_rows + 1), dtype=dt))
        add("tab_r0", np.zeros(h, dtype=dt))
        add("tab_col", np.zeros((h, 2 * cfg.max_cols + 1), dtype=dt))
        add("tab_loc", np.zeros((h, 2 * cfg.max_cell_len + 1), dtype=dt))
        for i in range(cfg.n_enc_layers):
            norm(f"enc{i}.ln1", d)
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"enc{i}.attn.{w}", d, d)
            norm(f"enc{i}.ln2", d)
            linear(f"enc{i}.ffn.w1", d, f)
            linear(f"enc{i}.ffn.w2", f, d)
        norm("enc.ln_f", d)
        for i in range(cfg.n_dec_layers):
            norm(f"dec{i}.ln1", d)
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"dec{i}.self.{w}", d, d)
            norm(f"dec{i}.ln2", d)
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"dec{i}.cross.{w}", d, d)
            norm(f"dec{i}.ln3", d)
            linear(f"dec{i}.ffn.w1", d, f)
            linear(f"dec{i}.ffn.w2", f, d)
        norm("dec.ln_f", d)
        linear("lm_head", d, cfg.vocab_size)
        add("count.w", np.zeros((d, 1), dtype=dt))
        add("count.b", np.zeros(1, dtype=dt))

    # ------------------------------------------------------------------
    # template/bucket caches
    # ------------------------------------------------------------------

    def template_for(self, header_ids: list[list[int]], n_rows: int) -> TableTemplate:
        key = (tuple(tuple(h) for h in header_ids), n_rows)
        tpl = self._template_cache.get(key)
        if tpl is None:
            tpl = make_template(self.vocab, self.cfg, header_ids, n_rows)
            self._template_cache[key] = tpl
        return tpl

    def _buckets(self, length: int) -> np.ndarray:
        idx = self._bucket_cache.get(length)
        if idx is None:
            idx = sequence_bucket_matrix(length, self.cfg)
            self._bucket_cache[length] = idx
        return idx

    # ------------------------------------------------------------------
    # forward pieces
    # ------------------------------------------------------------------

    def _attention(self, x_q, x_kv, prefix, bias, allow, train, rng):
        cfg = self.cfg
        b, t = x_q.shape[0], x_q.shape[1]
        s = x_kv.shape[1]
        h, dh = cfg.n_heads, cfg.head_dim
        p = self.params

        def heads(x, w, length):
            y = ops.matmul(x, p[w])
            y = ops.reshape(y, (b, length, h, dh))
            return ops.transpose(y, (0, 2, 1, 3))

        q = heads(x_q, f"{prefix}.wq", t)
        k = heads(x_kv, f"{prefix}.wk", s)
        v = heads(x_kv, f"{prefix}.wv", s)
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        if bias is not None:
            scores = ops.add(scores, bias)
        scores = ops.masked_fill(scores, ~allow, -np.inf)
        probs = ops.softmax(scores)
        ctx = ops.matmul(probs, v)
        ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, t, cfg.d_model))
        out = ops.matmul(ctx, p[f"{prefix}.wo"])
        if train and cfg.dropout > 0:
            out = ops.dropout(out, cfg.dropout, rng)
        return out

    def _ffn(self, x, prefix, train, rng):
        p = self.params
        y = ops.relu(ops.matmul(x, p[f"{prefix}.w1"]))
        y = ops.matmul(y, p[f"{prefix}.w2"])
        if train and self.cfg.dropout > 0:
            y = ops.dropout(y, self.cfg.dropout, rng)
        return y

    def _ln(self, x, name):
        return ops.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def encode(self, ids: np.ndarray, real: np.ndarray, train: bool = False, rng=None) -> Tensor:
        """Token ids [B,S] (PAD-padded) + validity mask -> memory [B,S,d]."""
        cfg = self.cfg
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] > cfg.max_input_len:
            raise ValueError(f"encoder input shape {ids.shape} exceeds max_input_len {cfg.max_input_len}")
        if ids.min(initial=0) < 0 or ids.max(initial=0) >= cfg.vocab_size:
            raise ValueError("unknown token id in encoder input")
        b, s = ids.shape
        x = ops.embedding(self.params["embed"], ids)
        if train and cfg.dropout > 0:
            x = ops.dropout(x, cfg.dropout, rng)
        bias = ops.bucket_bias(self.params["enc_beta"], self._buckets(s))
        allow = (real[:, None, None, :] & real[:, None, :, None]).astype(bool)
        for i in range(cfg.n_enc_layers):
            xn = self._ln(x, f"enc{i}.ln1")
            x = ops.add(x, self._attention(xn, xn, f"enc{i}.attn", bias, allow, train, rng))
            x = ops.add(x, self._ffn(self._ln(x, f"enc{i}.ln2"), f"enc{i}.ffn", train, rng))
        return self._ln(x, "enc.ln_f")

    def decoder_hidden(
        self,
        memory: Tensor,
        mem_real: np.ndarray,
        batch: DecoderBatch,
        train: bool = False,
        rng=None,
    ) -> Tensor:
        """Decoder stack over a collated batch; returns hidden states [B,T,d]."""
        cfg, p = self.cfg, self.params
        t = batch.length
        x = ops.embedding(p["embed"], batch.input_ids)
        if train and cfg.dropout > 0:
            x = ops.dropout(x, cfg.dropout, rng)
        beta = ops.bucket_bias(p["dec_beta"], self._buckets(t))
        pair = ops.stack_rows(
            [
                ops.pair_bias(p["tab_row"], p["tab_r0"], p["tab_col"], p["tab_loc"], ri, ci, li)
                for ri, ci, li in batch.pair_idx
            ]
        )
        bias = ops.add(pair, beta)
        q_real = np.zeros((len(batch.instances), t), dtype=bool)
        for k, inst in enumerate(batch.instances):
            q_real[k, : inst.length] = ~inst.is_pad
        cross_allow = (q_real[:, None, :, None] & mem_real[:, None, None, :]).astype(bool)
        for i in range(cfg.n_dec_layers):
            xs = self._ln(x, f"dec{i}.ln1")
            x = ops.add(x, self._attention(xs, xs, f"dec{i}.self", bias, batch.allow, train, rng))
            xc = self._ln(x, f"dec{i}.ln2")
            x = ops.add(x, self._attention(xc, memory, f"dec{i}.cross", None, cross_allow, train, rng))
            x = ops.add(x, self._ffn(self._ln(x, f"dec{i}.ln3"), f"dec{i}.ffn", train, rng))
        return self._ln(x, "dec.ln_f")

    def logits_at(self, hidden: Tensor, flat_positions: np.ndarray) -> Tensor:
        """Select flattened [B*T] positions and project to vocabulary logits."""
        b, t, d = hidden.shape
        flat = ops.reshape(hidden, (b * t, d))
        sel = ops.take_rows(flat, flat_positions)
        return ops.matmul(sel, self.params["lm_head"])

    def count_pred(self, memory: Tensor) -> Tensor:
        """Row-count regression from the first encoder position."""
        b, s, d = memory.shape
        flat = ops.reshape(memory, (b * s, d))
        first = ops.take_rows(flat, np.arange(b, dtype=np.int64) * s)
        out = ops.matmul(first, self.params["count.w"])
        return ops.add(ops.reshape(out, (b,)), self.params["count.b"])

    # ------------------------------------------------------------------
    # inference helpers
    # ------------------------------------------------------------------

    def encode_source(self, text_ids: list[int], train: bool = False, rng=None):
        ids = np.asarray([text_ids], dtype=np.int64)
        real = np.ones_like(ids, dtype=bool)
        return self.encode(ids, real, train=train, rng=rng), real

    def predict_group_count(self, memory: Tensor) -> float:
        """Unbounded row-count estimate for a single-example memory."""
        return float(self.count_pred(memory).data[0])

    def cell_logits(
        self,
        memory: Tensor,
        mem_real: np.ndarray,
        instance: LayoutInstance,
        cells: list[tuple[int, int]] | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-position vocabulary logits for open content positions.

        Returns (positions, logits) where logits have grammar-forbidden
        entries set to -inf. `cells` defaults to every open cell that carries
        loss positions in the instance.
        """
        if instance.loss_pos is None:
            raise ValueError("instance has no teacher-forced loss surface")
        batch = collate_instances([instance], self.cfg)
        hidden = self.decoder_hidden(memory, mem_real, batch, train=False)
        pos, _, cell_ids, legal, _ = batch.flat_loss_arrays()
        keep = np.ones(len(pos), dtype=bool)
        if cells is not None:
            wanted = {instance.template.cell_flat[c] for c in cells}
            keep = np.array([c in wanted for c in cell_ids], dtype=bool)
        logits = self.logits_at(hidden, pos[keep]).data
        masked = np.where(legal[keep], logits, -np.inf)
        return pos[keep], masked
