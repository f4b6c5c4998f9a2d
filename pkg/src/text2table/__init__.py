"""Text-to-table generation with permutation training and guided decoding."""

__version__ = "0.1.0"
