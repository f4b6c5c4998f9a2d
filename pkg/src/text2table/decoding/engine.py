"""Model-guided, grammar-constrained table filling.

An outer loop repeatedly asks the inner loop for a complete greedy candidate
of every eligible undecoded cell (candidates are mutually independent given
the committed cells), aggregates each candidate's token log-probabilities
into a cell score, sorts eligible cells by score, and commits up to k of
them. Decoding-order constraints restrict which undecoded cells are eligible
per iteration. Stopping is either a template with an upfront predicted row
count or the semi-templated variant that grows the template row by row until
an all-NULL sentinel row appears.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..model import TextToTableModel, collate_instances, instance_for_decoding
from ..numerics import no_grad
from ..table import Table
from ..vocab import EOC, NULL, UNK, Vocabulary, tokenize

Coord = tuple[int, int]

INNER_CRITERIA = ("min", "max", "mean")
OUTER_CRITERIA = ("max-first", "min-first")
CONSTRAINTS = ("none", "column-by-column", "row-by-row", "left-right-top-bottom", "no-distant-rows")
STOPPING = ("predicted-count", "semi-templated")


class DecodingConfigError(ValueError):
    pass


@dataclass
class DecodingConfig:
    k: int = 1
    inner_criterion: str = "max"
    outer_criterion: str = "max-first"
    constraint: str = "none"
    stopping: str = "predicted-count"
    max_rows_override: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise DecodingConfigError("k must be >= 1")
        if self.inner_criterion not in INNER_CRITERIA:
            raise DecodingConfigError(f"inner_criterion must be one of {INNER_CRITERIA}")
        if self.outer_criterion not in OUTER_CRITERIA:
            raise DecodingConfigError(f"outer_criterion must be one of {OUTER_CRITERIA}")
        if self.constraint not in CONSTRAINTS:
            raise DecodingConfigError(f"constraint must be one of {CONSTRAINTS}")
        if self.stopping not in STOPPING:
            raise DecodingConfigError(f"stopping must be one of {STOPPING}")

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "inner_criterion": self.inner_criterion,
            "outer_criterion": self.outer_criterion,
            "constraint": self.constraint,
            "stopping": self.stopping,
            "max_rows_override": self.max_rows_override,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecodingConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class Candidate:
    tokens: list[int]  # content ids, end-of-cell excluded
    token_logprobs: list[float]  # every emitted token including end-of-cell
    truncated: bool = False

    def score(self, criterion: str) -> float:
        agg = {"min": min, "max": max, "mean": lambda v: sum(v) / len(v)}[criterion]
        return float(agg(self.token_logprobs))


class CellCandidateSource(Protocol):
    """Produces greedy candidates for undecoded cells given committed ones."""

    def candidates(
        self, committed: dict[Coord, list[int]], cells: list[Coord]
    ) -> dict[Coord, Candidate]: ...


@dataclass
class DecodingState:
    n_rows: int
    n_cols: int
    committed: dict[Coord, list[int]] = field(default_factory=dict)

    def undecoded(self) -> list[Coord]:
        return [
            (r, c)
            for r in range(1, self.n_rows + 1)
            for c in range(1, self.n_cols + 1)
            if (r, c) not in self.committed
        ]

    def done(self) -> bool:
        return len(self.committed) == self.n_rows * self.n_cols


@dataclass
class TraceEntry:
    iteration: int
    cell: Coord
    score: float
    tokens: list[int]
    truncated: bool


def rows_from_count(pred: float, max_rows: int) -> int:
    """Round half up, clamp into [0, max_rows]."""
    return max(0, min(max_rows, int(np.floor(pred + 0.5))))


# ---------------------------------------------------------------------------
# constraint eligibility
# ---------------------------------------------------------------------------


def apply_constraint(state: DecodingState, cfg: DecodingConfig, commit_order: list[Coord]) -> list[Coord]:
    """Eligible undecoded cells under the active decoding-order constraint.

    commit_order is the history of committed cells (first to last), needed by
    the column-by-column rule whose active column is seeded by the first
    commit and then moves to the next unfinished column.
    """
    undecoded = state.undecoded()
    if cfg.constraint == "none":
        return undecoded
    if cfg.constraint == "column-by-column":
        if not commit_order:
            return undecoded
        by_col: dict[int, list[Coord]] = {}
        for r, c in undecoded:
            by_col.setdefault(c, []).append((r, c))
        first_col = commit_order[0][1]
        if first_col in by_col:
            return by_col[first_col]
        for c in sorted(by_col):
            return by_col[c]
        return []
    if cfg.constraint == "row-by-row":
        if not commit_order:
            return undecoded
        by_row: dict[int, list[Coord]] = {}
        for r, c in undecoded:
            by_row.setdefault(r, []).append((r, c))
        first_row = commit_order[0][0]
        if first_row in by_row:
            return by_row[first_row]
        for r in sorted(by_row):
            return by_row[r]
        return []
    if cfg.constraint == "left-right-top-bottom":
        return [min(undecoded, key=lambda rc: (rc[0], rc[1]))] if undecoded else []
    if cfg.constraint == "no-distant-rows":
        decoded = set(state.committed)
        return [
            (r, c)
            for (r, c) in undecoded
            if all((rr, c) in decoded for rr in range(1, r))
        ]
    raise DecodingConfigError(cfg.constraint)


def outer_criterion(scores: dict[Coord, float], cfg: DecodingConfig) -> list[Coord]:
    """Coordinates sorted by score; ties break on (row, column) order."""
    reverse = cfg.outer_criterion == "max-first"
    if reverse:
        return sorted(scores, key=lambda rc: (-scores[rc], rc[0], rc[1]))
    return sorted(scores, key=lambda rc: (scores[rc], rc[0], rc[1]))


# ---------------------------------------------------------------------------
# neural candidate source
# ---------------------------------------------------------------------------


class ModelCellSource:
    """Greedy per-cell decoding with grammar-masked logits, all open cells in
    parallel: one decoder pass per token step serves every growing candidate
    because open slots are mutually invisible."""

    def __init__(self, model: TextToTableModel, memory, mem_real, header_ids: list[list[int]], n_rows: int):
        self.model = model
        self.memory = memory
        self.mem_real = mem_real
        self.header_ids = header_ids
        self.n_rows = n_rows

    def candidates(
        self, committed: dict[Coord, list[int]], cells: list[Coord]
    ) -> dict[Coord, Candidate]:
        model = self.model
        l = model.cfg.max_cell_len
        tpl = model.template_for(self.header_ids, self.n_rows)
        grown: dict[Coord, Candidate] = {c: Candidate([], []) for c in cells}
        active = list(cells)
        with no_grad():
            while active:
                partial = {c: grown[c].tokens for c in cells}
                inst = instance_for_decoding(tpl, model.vocab, committed, partial)
                batch = collate_instances([inst], model.cfg)
                hidden = model.decoder_hidden(self.memory, self.mem_real, batch)
                positions = np.array(
                    [tpl.slot_start[c] + len(grown[c].tokens) for c in active], dtype=np.int64
                )
                logits = model.logits_at(hidden, positions).data
                still = []
                for row_i, coord in enumerate(active):
                    cand = grown[coord]
                    t_rel = len(cand.tokens)
                    prev = cand.tokens[-1] if cand.tokens else -1
                    legal = model.grammar.legal_row(t_rel, prev)
                    lp = _masked_log_softmax(logits[row_i], legal)
                    tok = int(np.argmax(lp))
                    cand.token_logprobs.append(float(lp[tok]))
                    if tok == EOC:
                        # a close at the final slot position was forced by the
                        # grammar, not chosen: flag it for diagnostics
                        cand.truncated = t_rel == l - 1
                    else:
                        cand.tokens.append(tok)
                        still.append(coord)
                active = still
        return grown


def _masked_log_softmax(logits: np.ndarray, legal: np.ndarray) -> np.ndarray:
    x = np.where(legal, logits, -np.inf)
    mx = x.max()
    z = np.where(legal, np.exp(x - mx), 0.0).sum()
    return x - mx - np.log(z)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


class InnerLoopError(RuntimeError):
    """Raised when no constraint-eligible undecoded cell exists."""


def inner_loop(
    source: CellCandidateSource,
    state: DecodingState,
    cfg: DecodingConfig,
    commit_order: list[Coord] | None = None,
    restrict: set[Coord] | None = None,
) -> tuple[dict[Coord, Candidate], dict[Coord, float]]:
    """Complete greedy candidates plus aggregated scores for eligible cells."""
    eligible = apply_constraint(state, cfg, commit_order or [])
    if restrict is not None:
        eligible = [c for c in eligible if c in restrict]
    if not eligible:
        raise InnerLoopError("no undecoded cell is eligible under the active constraint")
    cands = source.candidates(dict(state.committed), eligible)
    scores = {c: cand.score(cfg.inner_criterion) for c, cand in cands.items()}
    return cands, scores


def run_outer_loop(
    source: CellCandidateSource,
    state: DecodingState,
    cfg: DecodingConfig,
    *,
    restrict: set[Coord] | None = None,
    trace: list[TraceEntry] | None = None,
    iteration_offset: int = 0,
) -> int:
    """Fill every (restricted) undecoded cell; returns outer iteration count."""
    commit_order: list[Coord] = list(state.committed)
    target = restrict if restrict is not None else set(state.undecoded())
    iteration = 0
    while any(c not in state.committed for c in target):
        iteration += 1
        cands, scores = inner_loop(source, state, cfg, commit_order, restrict)
        ranked = outer_criterion(scores, cfg)
        committed_now = 0
        while committed_now < cfg.k:
            eligible_now = set(apply_constraint(state, cfg, commit_order))
            if restrict is not None:
                eligible_now &= restrict
            pick = next(
                (c for c in ranked if c not in state.committed and c in eligible_now), None
            )
            if pick is None:
                break
            cand = cands[pick]
            state.committed[pick] = list(cand.tokens)
            commit_order.append(pick)
            committed_now += 1
            if trace is not None:
                trace.append(
                    TraceEntry(
                        iteration + iteration_offset,
                        pick,
                        scores[pick],
                        list(cand.tokens),
                        cand.truncated,
                    )
                )
        if committed_now == 0:
            raise InnerLoopError("outer loop failed to commit any cell")
    return iteration


def semi_templated_stop(state: DecodingState, row: int) -> bool:
    """True when the given completed row is the all-NULL sentinel."""
    return all(state.committed[(row, c)] == [NULL] for c in range(1, state.n_cols + 1))


# ---------------------------------------------------------------------------
# end-to-end decode
# ---------------------------------------------------------------------------


@dataclass
class DecodeResult:
    table: Table
    trace: list[TraceEntry]
    outer_iterations: int
    predicted_count: float | None
    hit_row_cap: bool = False

    @property
    def truncated_cells(self) -> list[Coord]:
        return [t.cell for t in self.trace if t.truncated]


def _cell_to_value(vocab: Vocabulary, tokens: list[int]) -> str | None:
    if tokens == [NULL]:
        return None
    return vocab.decode_content(tokens)


def _state_to_table(vocab: Vocabulary, state: DecodingState, headers: list[str], n_rows: int) -> Table:
    rows = [
        [_cell_to_value(vocab, state.committed[(r, c)]) for c in range(1, state.n_cols + 1)]
        for r in range(1, n_rows + 1)
    ]
    return Table(list(headers), rows)


def decode_table(
    text: str,
    model: TextToTableModel,
    cfg: DecodingConfig,
    headers: list[str],
    *,
    keep_trace: bool = False,
) -> DecodeResult:
    """Decode one table from raw text with the configured strategy."""
    vocab = model.vocab
    header_ids = [vocab.encode_tokens(tokenize(h)) for h in headers]
    m = len(headers)
    ids = vocab.encode(text)[: model.cfg.max_input_len]
    with no_grad():
        memory, real = model.encode_source(ids)
        count = model.predict_group_count(memory)
    max_rows = cfg.max_rows_override or model.cfg.max_rows
    trace: list[TraceEntry] | None = [] if keep_trace else None

    if cfg.stopping == "predicted-count":
        n = rows_from_count(count, max_rows)
        state = DecodingState(n, m)
        iters = 0
        if n > 0:
            source = ModelCellSource(model, memory, real, header_ids, n)
            iters = run_outer_loop(source, state, cfg, trace=trace)
        return DecodeResult(
            _state_to_table(vocab, state, headers, n), trace or [], iters, count
        )

    # semi-templated: grow the template row by row until the sentinel row
    state = DecodingState(0, m)
    iters = 0
    kept_rows = 0
    hit_cap = True
    for r in range(1, max_rows + 1):
        state.n_rows = r
        source = ModelCellSource(model, memory, real, header_ids, r)
        row_cells = {(r, c) for c in range(1, m + 1)}
        iters += run_outer_loop(
            source, state, cfg, restrict=row_cells, trace=trace, iteration_offset=iters
        )
        if semi_templated_stop(state, r):
            kept_rows = r - 1
            hit_cap = False
            break
        kept_rows = r
    table = _state_to_table(vocab, state, headers, kept_rows)
    return DecodeResult(table, trace or [], iters, count, hit_row_cap=hit_cap)
