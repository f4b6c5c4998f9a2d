"""Procedural text-to-table corpora.

Three task families:

* ``keyvalue``  - one row of named properties stated in shuffled sentences.
* ``lineitems`` - several purchase rows; one optional column exercises NULLs.
* ``dependent`` - a target column whose evidence sentence is keyed by another
  cell of the same row and placed late in the text (after later rows' base
  sentences), so a strict top-down, left-to-right decode order must commit
  the target before its anchor is cheap to resolve.

Generation is deterministic per (seed, record index); records are therefore
independent and the stream can be produced in any order or in parallel.
A rule-based extractor over the same sentence templates doubles as a
solvability oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..table import Table
from ..vocab import tokenize
from .io import DatasetRecord

TASKS = ("keyvalue", "lineitems", "dependent")

ITEMS = [
    "pens", "books", "mugs", "chairs", "lamps", "desks",
    "plates", "forks", "ropes", "nails", "bolts", "tiles",
]
COLORS = ["red", "blue", "green", "black", "white", "silver"]
NAMES = ["alice", "omar", "mei", "ravi", "lena", "kofi", "sara", "ivan"]
CITIES = ["lisbon", "oslo", "quito", "hanoi", "accra", "perth"]
PLANS = ["basic", "gold", "family", "student"]
NOISE = [
    "the store was busy today .",
    "thanks for the visit .",
    "delivery was quick .",
    "the weather stayed calm .",
]


class CorpusError(ValueError):
    """Invalid corpus spec or a schema that produces invalid cells."""


@dataclass
class CorpusSpec:
    task: str
    n_examples: int
    rows_min: int = 1
    rows_max: int = 3
    noise_rate: float = 0.2
    null_rate: float = 0.2
    max_cell_tokens: int = 5
    seed: int = 0
    columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.task not in TASKS:
            raise CorpusError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.n_examples < 0 or self.rows_min < 0 or self.rows_max < self.rows_min:
            raise CorpusError("bad n_examples / row-count bounds")
        if self.task == "dependent" and self.rows_min < 2:
            # the non-row-major guarantee needs at least two rows
            self.rows_min = 2
            self.rows_max = max(self.rows_max, 2)
        if not self.columns:
            self.columns = list(_DEFAULT_COLUMNS[self.task])
        else:
            known = set(_DEFAULT_COLUMNS[self.task])
            bad = [c for c in self.columns if c not in known]
            if bad or len(set(self.columns)) != len(self.columns):
                raise CorpusError(
                    f"columns for {self.task} must be distinct members of {sorted(known)}, got {self.columns}"
                )
        if self.rows_max > len(ITEMS) and self.task in ("lineitems", "dependent"):
            raise CorpusError(f"rows_max {self.rows_max} exceeds distinct item pool {len(ITEMS)}")

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "n_examples": self.n_examples,
            "rows_min": self.rows_min,
            "rows_max": self.rows_max,
            "noise_rate": self.noise_rate,
            "null_rate": self.null_rate,
            "max_cell_tokens": self.max_cell_tokens,
            "seed": self.seed,
            "columns": list(self.columns),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CorpusSpec":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


_DEFAULT_COLUMNS = {
    "keyvalue": ["name", "city", "age", "plan"],
    "lineitems": ["item", "qty", "price", "color"],
    "dependent": ["total", "item", "qty", "unit"],
}


def _check_cell(spec: CorpusSpec, column: str, value: str | None) -> str | None:
    if value is None:
        return None
    if len(tokenize(value)) > spec.max_cell_tokens:
        raise CorpusError(f"column {column!r} produced an over-long cell: {value!r}")
    return value


def _with_noise(rng: np.random.Generator, sentences: list[str], rate: float) -> list[str]:
    out: list[str] = []
    for s in sentences:
        if rng.random() < rate:
            out.append(NOISE[int(rng.integers(len(NOISE)))])
        out.append(s)
    if rng.random() < rate:
        out.append(NOISE[int(rng.integers(len(NOISE)))])
    return out


def _gen_keyvalue(spec: CorpusSpec, rng: np.random.Generator) -> tuple[str, Table]:
    name = NAMES[int(rng.integers(len(NAMES)))]
    city = CITIES[int(rng.integers(len(CITIES)))]
    age = str(int(rng.integers(18, 90)))
    plan = PLANS[int(rng.integers(len(PLANS)))] if rng.random() >= spec.null_rate else None
    values = {"name": name, "city": city, "age": age, "plan": plan}
    sentences = [f"the {k} is {v} ." for k, v in values.items() if v is not None]
    order = rng.permutation(len(sentences))
    sentences = [sentences[i] for i in order]
    text = " ".join(_with_noise(rng, sentences, spec.noise_rate))
    row = [_check_cell(spec, c, values.get(c)) for c in spec.columns]
    return text, Table(list(spec.columns), [row])


def _gen_lineitems(spec: CorpusSpec, rng: np.random.Generator) -> tuple[str, Table]:
    n = int(rng.integers(spec.rows_min, spec.rows_max + 1))
    items = list(rng.choice(len(ITEMS), size=n, replace=False))
    sentences: list[str] = []
    rows: list[list[str | None]] = []
    for idx in items:
        item = ITEMS[int(idx)]
        qty = str(int(rng.integers(1, 10)))
        price = str(int(rng.integers(2, 21)))
        color = COLORS[int(rng.integers(len(COLORS)))] if rng.random() >= spec.null_rate else None
        verb = "bought" if rng.random() < 0.5 else "ordered"
        if color is None:
            sentences.append(f"the customer {verb} {qty} {item} for {price} dollars .")
        else:
            sentences.append(f"the customer {verb} {qty} {color} {item} for {price} dollars .")
        cells = {"item": item, "qty": qty, "price": price, "color": color}
        rows.append([_check_cell(spec, c, cells.get(c)) for c in spec.columns])
    text = " ".join(_with_noise(rng, sentences, spec.noise_rate))
    return text, Table(list(spec.columns), rows)


def _gen_dependent(spec: CorpusSpec, rng: np.random.Generator) -> tuple[str, Table]:
    n = int(rng.integers(spec.rows_min, spec.rows_max + 1))
    items = list(rng.choice(len(ITEMS), size=n, replace=False))
    base: list[str] = []
    cues: list[str] = []
    rows: list[list[str | None]] = []
    for idx in items:
        item = ITEMS[int(idx)]
        qty = int(rng.integers(1, 10))
        unit = int(rng.integers(2, 10))
        total = qty * unit
        base.append(f"they bought {qty} {item} at {unit} each .")
        cues.append(f"the {item} order came to {total} in total .")
        cells = {"total": str(total), "item": item, "qty": str(qty), "unit": str(unit)}
        rows.append([_check_cell(spec, c, cells.get(c)) for c in spec.columns])
    # cue sentences follow every base sentence, in reversed row order: the
    # dependent column's evidence for row i comes after rows i+1.. are stated
    sentences = base + cues[::-1]
    text = " ".join(_with_noise(rng, sentences, spec.noise_rate))
    return text, Table(list(spec.columns), rows)


_GENERATORS = {
    "keyvalue": _gen_keyvalue,
    "lineitems": _gen_lineitems,
    "dependent": _gen_dependent,
}


def generate(spec: CorpusSpec) -> Iterator[DatasetRecord]:
    """Yield n_examples records, deterministic in (seed, index)."""
    gen = _GENERATORS[spec.task]
    for idx in range(spec.n_examples):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, idx]))
        text, table = gen(spec, rng)
        yield DatasetRecord(f"{spec.task}-{idx:06d}", text, table.validate())


# ---------------------------------------------------------------------------
# rule-based extraction oracle (tests assert it reconstructs gold exactly)
# ---------------------------------------------------------------------------


def oracle_extract(spec: CorpusSpec, text: str) -> Table:
    """Reconstruct the gold table from generated text via the templates."""
    sentences = [s.strip() for s in text.split(" . ") if s.strip()]
    sentences = [s[:-2] if s.endswith(" .") else s for s in sentences]
    if spec.task == "keyvalue":
        values: dict[str, str | None] = {c: None for c in spec.columns}
        for s in sentences:
            w = s.split()
            if len(w) >= 4 and w[0] == "the" and w[2] == "is" and w[1] in values:
                values[w[1]] = " ".join(w[3:])
        return Table(list(spec.columns), [[values[c] for c in spec.columns]])

    if spec.task == "lineitems":
        rows = []
        for s in sentences:
            w = s.split()
            if len(w) >= 7 and w[:2] == ["the", "customer"] and w[2] in ("bought", "ordered"):
                qty = w[3]
                rest = w[4:]
                k = rest.index("for")
                pre = rest[:k]
                price = rest[k + 1]
                color = pre[0] if len(pre) == 2 else None
                item = pre[-1]
                cells = {"item": item, "qty": qty, "price": price, "color": color}
                rows.append([cells.get(c) for c in spec.columns])
        return Table(list(spec.columns), rows)

    if spec.task == "dependent":
        rows = []
        totals: dict[str, str] = {}
        for s in sentences:
            w = s.split()
            if len(w) >= 7 and w[:2] == ["they", "bought"] and "at" in w:
                k = w.index("at")
                cells = {"item": " ".join(w[3:k]), "qty": w[2], "unit": w[k + 1]}
                rows.append(cells)
            elif len(w) >= 7 and w[0] == "the" and w[-2:] == ["in", "total"] and "came" in w:
                k = w.index("came")
                totals[" ".join(w[1 : k - 1])] = w[k + 2]
        out = []
        for cells in rows:
            cells = dict(cells, total=totals.get(cells["item"]))
            out.append([cells.get(c) for c in spec.columns])
        return Table(list(spec.columns), out)

    raise CorpusError(f"no oracle for task {spec.task}")
