from .engine import (
    CONSTRAINTS,
    INNER_CRITERIA,
    OUTER_CRITERIA,
    STOPPING,
    Candidate,
    CellCandidateSource,
    DecodeResult,
    DecodingConfig,
    DecodingConfigError,
    DecodingState,
    InnerLoopError,
    ModelCellSource,
    TraceEntry,
    apply_constraint,
    decode_table,
    inner_loop,
    outer_criterion,
    rows_from_count,
    run_outer_loop,
    semi_templated_stop,
)

__all__ = [
    "CONSTRAINTS",
    "Candidate",
    "CellCandidateSource",
    "DecodeResult",
    "DecodingConfig",
    "DecodingConfigError",
    "DecodingState",
    "INNER_CRITERIA",
    "InnerLoopError",
    "ModelCellSource",
    "OUTER_CRITERIA",
    "STOPPING",
    "TraceEntry",
    "apply_constraint",
    "decode_table",
    "inner_loop",
    "outer_criterion",
    "rows_from_count",
    "run_outer_loop",
    "semi_templated_stop",
]
