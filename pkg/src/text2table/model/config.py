"""Model hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    dropout: float = 0.1
    max_cell_len: int = 6  # slot width: up to max_cell_len-1 content tokens + end-of-cell
    max_rows: int = 5
    max_cols: int = 6
    relative_buckets: int = 32
    relative_max_distance: int = 128
    max_input_len: int = 256
    float_width: int = 64

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.max_cell_len < 2:
            raise ValueError("max_cell_len must be >= 2 (one content token plus end-of-cell)")
        if self.float_width not in (32, 64):
            raise ValueError("float_width must be 32 or 64")

    @property
    def dtype(self):
        return np.float64 if self.float_width == 64 else np.float32

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})
