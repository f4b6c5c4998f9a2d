"""Shared test helpers: finite differences and gradient comparison."""

from __future__ import annotations

import numpy as np


def finite_diff_grad(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. arr, edited in place."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return g


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


class MockCellSource:
    """Deterministic pseudo-random candidate source keyed on (cell, committed set).

    Token ids and per-token log-probs derive from a seed plus the exact
    decoding state, so candidates are reproducible and context-dependent
    without any neural model.
    """

    def __init__(self, n_rows, n_cols, seed=0, vocab_lo=10, vocab_hi=20):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.seed = seed
        self.vocab_lo = vocab_lo
        self.vocab_hi = vocab_hi

    def _rng(self, cell, committed):
        key = [self.seed, cell[0], cell[1]]
        for r, c in sorted(committed):
            key += [r, c]
        return np.random.default_rng(np.random.SeedSequence(key))

    def score_of(self, cell, committed):
        """Aggregated max-score this source will assign (for oracles)."""
        from text2table.decoding import Candidate

        return self.candidate_for(cell, committed).score("max")

    def candidate_for(self, cell, committed):
        from text2table.decoding import Candidate

        rng = self._rng(cell, committed)
        n_tok = int(rng.integers(1, 4))
        tokens = [int(t) for t in rng.integers(self.vocab_lo, self.vocab_hi, size=n_tok)]
        lps = [float(x) for x in -rng.random(n_tok + 1) * 3.0]  # content + end-of-cell
        return Candidate(tokens, lps)

    def candidates(self, committed, cells):
        return {c: self.candidate_for(c, committed) for c in cells}
