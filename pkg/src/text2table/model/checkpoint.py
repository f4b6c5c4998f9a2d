"""Versioned checkpoint container with per-array integrity hashes.

One npz file holds a JSON metadata blob (format version, model config,
vocabulary, step, optional run config, array manifest with sha256 digests)
plus the named parameter and optimizer arrays. Loading verifies version and
digests and refuses anything that does not match bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import zipfile

import numpy as np

from ..vocab import Vocabulary
from .config import ModelConfig
from .transformer import TextToTableModel

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def save_checkpoint(
    path: str,
    model: TextToTableModel,
    *,
    step: int = 0,
    optimizer=None,
    run_config: dict | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {}
    manifest: dict[str, str] = {}
    for name, t in model.params.items():
        arrays[f"param::{name}"] = t.data
        manifest[f"param::{name}"] = _digest(t.data)
    opt_meta = None
    if optimizer is not None:
        for name, arr in optimizer.state_arrays().items():
            arrays[f"opt::{name}"] = arr
            manifest[f"opt::{name}"] = _digest(arr)
        opt_meta = {"step_count": optimizer.step_count}
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_json(),
        "vocab": model.vocab.to_json(),
        "step": step,
        "run_config": run_config,
        "optimizer": opt_meta,
        "manifest": manifest,
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str) -> tuple[TextToTableModel, dict]:
    """Rebuild the model; returns (model, meta). Meta carries step/run_config
    and, when present, raw optimizer arrays under "opt_arrays"."""
    try:
        with np.load(path) as data:
            if "__meta__" not in data:
                raise CheckpointError(f"{path}: not a checkpoint (missing metadata)")
            meta = json.loads(bytes(data["__meta__"].tobytes()).decode("utf-8"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: format version {meta.get('format_version')} != {FORMAT_VERSION}"
                )
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (zipfile.BadZipFile, ValueError, OSError, KeyError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None

    manifest = meta["manifest"]
    for name, arr in arrays.items():
        want = manifest.get(name)
        got = _digest(arr)
        if want != got:
            raise CheckpointError(f"{path}: array {name} hash mismatch ({got[:12]} != {str(want)[:12]})")
    if set(manifest) != set(arrays):
        raise CheckpointError(f"{path}: manifest does not match stored arrays")

    cfg = ModelConfig.from_json(meta["model_config"])
    vocab = Vocabulary.from_json(meta["vocab"])
    model = TextToTableModel(cfg, vocab, seed=0)
    for name, t in model.params.items():
        key = f"param::{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing parameter {name}")
        if arrays[key].shape != t.data.shape:
            raise CheckpointError(
                f"{path}: parameter {name} shape {arrays[key].shape} != {t.data.shape}"
            )
        t.data[...] = arrays[key]
    meta["opt_arrays"] = {
        k.removeprefix("opt::"): v for k, v in arrays.items() if k.startswith("opt::")
    }
    return model, meta
