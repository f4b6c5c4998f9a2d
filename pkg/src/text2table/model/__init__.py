from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ModelConfig
from .layout import (
    GrammarMasks,
    LayoutError,
    LayoutInstance,
    TableTemplate,
    content_token_ids,
    instance_for_decoding,
    instance_for_pass,
    make_template,
)
from .transformer import DecoderBatch, TextToTableModel, collate_instances

__all__ = [
    "CheckpointError",
    "DecoderBatch",
    "GrammarMasks",
    "LayoutError",
    "LayoutInstance",
    "ModelConfig",
    "TableTemplate",
    "TextToTableModel",
    "collate_instances",
    "content_token_ids",
    "instance_for_decoding",
    "instance_for_pass",
    "load_checkpoint",
    "make_template",
    "save_checkpoint",
]
