"""Cell-order permutations and the filled/open split for one training pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Coord = tuple[int, int]


@dataclass(frozen=True)
class PermutationPlan:
    """A linear order over all n*m cells plus a cut point.

    Cells strictly before the cut are filled context; the rest are open
    prediction targets. cut ranges over [1, C], so cut=1 fills nothing and
    cut=C leaves exactly one open cell.
    """

    order: tuple[Coord, ...]
    cut: int

    def __post_init__(self):
        c = len(self.order)
        if not 1 <= self.cut <= c:
            raise ValueError(f"cut {self.cut} outside 1..{c}")
        if len(set(self.order)) != c:
            raise ValueError("order is not a bijection")

    @property
    def filled(self) -> frozenset[Coord]:
        return frozenset(self.order[: self.cut - 1])

    @property
    def open(self) -> tuple[Coord, ...]:
        return self.order[self.cut - 1 :]

    def position_of(self, coord: Coord) -> int:
        """1-based position of a cell in the ordering (sigma inverse)."""
        return self.order.index(coord) + 1


def row_major_order(n_rows: int, n_cols: int) -> tuple[Coord, ...]:
    return tuple((r, c) for r in range(1, n_rows + 1) for c in range(1, n_cols + 1))


def sample_permutation(n_rows: int, n_cols: int, rng: np.random.Generator) -> PermutationPlan:
    """Uniform order over all C! arrangements, uniform cut over [1, C]."""
    if n_rows < 1 or n_cols < 1:
        raise ValueError("table must have at least one row and one column")
    coords = row_major_order(n_rows, n_cols)
    perm = rng.permutation(len(coords))
    cut = int(rng.integers(1, len(coords) + 1))
    return PermutationPlan(tuple(coords[i] for i in perm), cut)
