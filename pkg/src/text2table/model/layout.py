"""Serialized decoder layout: header blocks, row markers and fixed-width cell
slots, with the coordinate maps and index matrices the attention biases and
visibility masks are built from.

Sequence layout for an n-row, m-column template:

    [col-1 header tokens]...[col-m header tokens]
    [<row_1>][slot 1,1]...[slot 1,m] ... [<row_n>][slot n,1]...[slot n,m]

Every slot spans ``l = max_cell_len`` positions. Slot inputs are shifted one
step: position 0 carries BOS, position t carries the cell's token t-1, so the
hidden state at slot position t predicts token t (content tokens, then the
end-of-cell mark). A NULL cell is the single NULL token plus end-of-cell.

Coordinates follow the 1-based cell convention with 0 reserved for the header
row/column: header tokens sit at (0, col), row markers at (row, 0), cell
tokens at (row, col).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import kernels
from ..vocab import BOS, EOC, NULL, PAD, Vocabulary
from .config import ModelConfig

Coord = tuple[int, int]


class LayoutError(ValueError):
    pass


def relative_bucket(rel: np.ndarray, num_buckets: int, max_distance: int) -> np.ndarray:
    """Bidirectional log-spaced relative position buckets (shared scheme)."""
    out = np.zeros_like(rel)
    half = num_buckets // 2
    out += (rel > 0) * half
    arel = np.abs(rel)
    max_exact = half // 2
    large = max_exact + (
        np.log(np.maximum(arel, 1) / max_exact)
        / np.log(max_distance / max_exact)
        * (half - max_exact)
    ).astype(rel.dtype)
    large = np.minimum(large, half - 1)
    out += np.where(arel < max_exact, arel, large)
    return out


def sequence_bucket_matrix(length: int, cfg: ModelConfig) -> np.ndarray:
    pos = np.arange(length, dtype=np.int64)
    rel = pos[None, :] - pos[:, None]  # key minus query
    return relative_bucket(rel, cfg.relative_buckets, cfg.relative_max_distance)


@dataclass
class TableTemplate:
    """Static part of a decoder layout for one (headers, n_rows) shape."""

    n_rows: int
    n_cols: int
    slot_len: int
    length: int
    base_inputs: np.ndarray  # [T] header tokens, row markers, BOS slot heads, PAD
    rows: np.ndarray  # [T] 0 for header tokens
    cols: np.ndarray  # [T] 0 for row markers
    within: np.ndarray  # [T] token index inside its block
    cell_id: np.ndarray  # [T] one id per block (header blocks included)
    is_struct: np.ndarray  # [T] header tokens and row markers
    slot_start: dict[Coord, int]
    cell_flat: dict[Coord, int]  # (r,c) -> 0-based row-major cell index
    row_idx: np.ndarray = field(repr=False, default=None)  # [T,T] into R table, -1 -> header bucket
    col_idx: np.ndarray = field(repr=False, default=None)  # [T,T] into C table
    loc_idx: np.ndarray = field(repr=False, default=None)  # [T,T] into L table, -1 -> cross-cell
    beta_idx: np.ndarray = field(repr=False, default=None)  # [T,T] into the decoder bucket table

    def cells(self) -> list[Coord]:
        return [(r, c) for r in range(1, self.n_rows + 1) for c in range(1, self.n_cols + 1)]


def make_template(
    vocab: Vocabulary, cfg: ModelConfig, header_ids: list[list[int]], n_rows: int
) -> TableTemplate:
    m = len(header_ids)
    l = cfg.max_cell_len
    if n_rows > cfg.max_rows:
        raise LayoutError(f"n_rows {n_rows} exceeds max_rows {cfg.max_rows}")
    if m > cfg.max_cols or m == 0:
        raise LayoutError(f"n_cols {m} outside 1..{cfg.max_cols}")

    header_ids = [h[:l] for h in header_ids]  # keep local offsets within the L table range
    length = sum(len(h) for h in header_ids) + n_rows * (1 + m * l)
    base = np.full(length, PAD, dtype=np.int64)
    rows = np.zeros(length, dtype=np.int64)
    cols = np.zeros(length, dtype=np.int64)
    within = np.zeros(length, dtype=np.int64)
    cell_id = np.zeros(length, dtype=np.int64)
    struct = np.zeros(length, dtype=bool)
    slot_start: dict[Coord, int] = {}

    pos = 0
    block = 0
    for j, h in enumerate(header_ids, start=1):
        for t, tok in enumerate(h):
            base[pos] = tok
            rows[pos] = 0
            cols[pos] = j
            within[pos] = t
            cell_id[pos] = block
            struct[pos] = True
            pos += 1
        block += 1
    for i in range(1, n_rows + 1):
        base[pos] = vocab.row_marker_id(i)
        rows[pos], cols[pos], within[pos] = i, 0, 0
        cell_id[pos] = block
        struct[pos] = True
        block += 1
        pos += 1
        for j in range(1, m + 1):
            slot_start[(i, j)] = pos
            for t in range(l):
                base[pos] = BOS if t == 0 else PAD
                rows[pos], cols[pos], within[pos] = i, j, t
                cell_id[pos] = block
                pos += 1
            block += 1
    assert pos == length

    tpl = TableTemplate(
        n_rows=n_rows,
        n_cols=m,
        slot_len=l,
        length=length,
        base_inputs=base,
        rows=rows,
        cols=cols,
        within=within,
        cell_id=cell_id,
        is_struct=struct,
        slot_start=slot_start,
        cell_flat={(r, c): (r - 1) * m + (c - 1) for r in range(1, n_rows + 1) for c in range(1, m + 1)},
    )

    hdr_key = rows[None, :] == 0
    tpl.row_idx = np.where(hdr_key, -1, rows[:, None] - rows[None, :] + cfg.max_rows)
    tpl.col_idx = cols[:, None] - cols[None, :] + cfg.max_cols
    serial = np.arange(length, dtype=np.int64)
    same_cell = cell_id[:, None] == cell_id[None, :]
    tpl.loc_idx = np.where(same_cell, serial[:, None] - serial[None, :] + l, -1)
    tpl.beta_idx = sequence_bucket_matrix(length, cfg)
    return tpl


class GrammarMasks:
    """Legal next-token sets for slot positions.

    Position 0 admits content or NULL; after NULL only end-of-cell; the final
    slot position forces end-of-cell; otherwise content or end-of-cell.
    Structural ids are illegal everywhere inside a cell.
    """

    def __init__(self, vocab: Vocabulary, slot_len: int):
        v = len(vocab)
        self.slot_len = slot_len
        content = np.zeros(v, dtype=bool)
        content[vocab.content_ids()] = True
        self.open_first = content.copy()
        self.open_first[NULL] = True
        self.mid = content.copy()
        self.mid[EOC] = True
        self.close_only = np.zeros(v, dtype=bool)
        self.close_only[EOC] = True

    def legal_row(self, t: int, prev_id: int) -> np.ndarray:
        if t == 0:
            return self.open_first
        if prev_id == NULL:
            return self.close_only
        if t == self.slot_len - 1:
            return self.close_only
        return self.mid


@dataclass
class LayoutInstance:
    """One concrete decoder sequence: a template plus cell contents and roles."""

    template: TableTemplate
    input_ids: np.ndarray  # [T]
    is_pad: np.ndarray  # [T]
    is_ctx: np.ndarray  # [T] structural tokens and filled cells
    rank: np.ndarray  # [T] visibility stage for staircase (fixed-order) masks
    open_cells: list[Coord] = field(default_factory=list)
    # loss surface (teacher-forced instances only)
    loss_pos: np.ndarray | None = None  # [P] positions
    loss_targets: np.ndarray | None = None  # [P]
    loss_cell: np.ndarray | None = None  # [P] row-major flat cell index
    legal: np.ndarray | None = None  # [P, V]

    @property
    def length(self) -> int:
        return self.template.length

    def visibility(self) -> np.ndarray:
        return kernels.visibility_mask(
            self.is_pad, self.is_ctx, self.rank, self.template.cell_id, self.template.within
        )


def content_token_ids(vocab: Vocabulary, cell: str | None) -> list[int]:
    """Token ids for a cell value; NULL cells become the single NULL id."""
    if cell is None:
        return [NULL]
    return vocab.encode(cell)


def _place(template: TableTemplate, inputs: np.ndarray, pad: np.ndarray, coord: Coord, content: list[int]) -> None:
    l = template.slot_len
    if len(content) > l - 1:
        raise LayoutError(f"cell {coord} content length {len(content)} exceeds {l - 1}")
    p0 = template.slot_start[coord]
    inputs[p0] = BOS
    for t, tok in enumerate(content):
        inputs[p0 + 1 + t] = tok
    pad[p0 : p0 + len(content) + 1] = False
    pad[p0 + len(content) + 1 : p0 + l] = True


def instance_for_pass(
    template: TableTemplate,
    vocab: Vocabulary,
    grammar: GrammarMasks,
    cell_contents: dict[Coord, list[int]],
    filled: set[Coord],
    *,
    staircase: bool = False,
) -> LayoutInstance:
    """Teacher-forced layout: `filled` cells are context, the rest carry loss.

    With ``staircase=True`` every cell carries loss and sees exactly the cells
    before it in row-major order (the fixed-order training variant); `filled`
    must then be empty.
    """
    t_len = template.length
    inputs = template.base_inputs.copy()
    pad = np.zeros(t_len, dtype=bool)
    ctx = template.is_struct.copy()
    rank = np.zeros(t_len, dtype=np.int64)

    if staircase and filled:
        raise LayoutError("staircase mode fills no cells")

    loss_pos: list[int] = []
    loss_tgt: list[int] = []
    loss_cell: list[int] = []
    legal_rows: list[np.ndarray] = []
    open_cells: list[Coord] = []

    for coord in template.cells():
        content = cell_contents[coord]
        _place(template, inputs, pad, coord, content)
        p0 = template.slot_start[coord]
        if staircase:
            rank[p0 : p0 + template.slot_len] = template.cell_flat[coord] + 1
        if coord in filled and not staircase:
            ctx[p0 : p0 + template.slot_len] = True
            continue
        open_cells.append(coord)
        targets = content + [EOC]
        prev = BOS
        for t, tok in enumerate(targets):
            loss_pos.append(p0 + t)
            loss_tgt.append(tok)
            loss_cell.append(template.cell_flat[coord])
            legal_rows.append(grammar.legal_row(t, prev))
            prev = tok

    return LayoutInstance(
        template=template,
        input_ids=inputs,
        is_pad=pad,
        is_ctx=ctx,
        rank=rank,
        open_cells=open_cells,
        loss_pos=np.asarray(loss_pos, dtype=np.int64),
        loss_targets=np.asarray(loss_tgt, dtype=np.int64),
        loss_cell=np.asarray(loss_cell, dtype=np.int64),
        legal=np.stack(legal_rows) if legal_rows else np.zeros((0, len(vocab)), dtype=bool),
    )


def instance_for_decoding(
    template: TableTemplate,
    vocab: Vocabulary,
    committed: dict[Coord, list[int]],
    candidates: dict[Coord, list[int]],
) -> LayoutInstance:
    """Decode-time layout: committed cells are context, candidates are open
    prefixes placed in their own slots (mutually invisible)."""
    inputs = template.base_inputs.copy()
    pad = np.zeros(template.length, dtype=bool)
    ctx = template.is_struct.copy()
    rank = np.zeros(template.length, dtype=np.int64)

    for coord in template.cells():
        if coord in committed:
            _place(template, inputs, pad, coord, committed[coord])
            p0 = template.slot_start[coord]
            ctx[p0 : p0 + template.slot_len] = True
        else:
            _place(template, inputs, pad, coord, candidates.get(coord, []))

    return LayoutInstance(
        template=template,
        input_ids=inputs,
        is_pad=pad,
        is_ctx=ctx,
        rank=rank,
        open_cells=[c for c in template.cells() if c not in committed],
    )
