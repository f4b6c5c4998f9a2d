from .scoring import (
    AlignmentError,
    AlignmentMode,
    CorpusScore,
    Counts,
    HeaderMismatchError,
    TableScore,
    score_corpus,
    score_tables,
)

__all__ = [
    "AlignmentError",
    "AlignmentMode",
    "CorpusScore",
    "Counts",
    "HeaderMismatchError",
    "TableScore",
    "score_corpus",
    "score_tables",
]
