from .estimator import (
    exact_expected_nll,
    exact_expected_nll_by_orderings,
    instance_cell_nll,
    masked_nll_rows,
    mc_expected_nll,
    mean_pass_loss_over_all_pairs,
    pass_cell_nll,
)
from .loop import (
    StepStats,
    Trainer,
    TrainingConfig,
    TrainingDiverged,
    build_source_batch,
    step_rng,
)
from .passes import (
    TRAINING_MODES,
    TrainingExample,
    build_fixed_causal_pass,
    build_semi_templated_corpus_variant,
    build_training_pass,
    prepare_example,
)
from .permutation import PermutationPlan, row_major_order, sample_permutation

__all__ = [
    "PermutationPlan",
    "StepStats",
    "TRAINING_MODES",
    "Trainer",
    "TrainingConfig",
    "TrainingDiverged",
    "TrainingExample",
    "build_fixed_causal_pass",
    "build_semi_templated_corpus_variant",
    "build_source_batch",
    "build_training_pass",
    "exact_expected_nll",
    "exact_expected_nll_by_orderings",
    "instance_cell_nll",
    "masked_nll_rows",
    "mc_expected_nll",
    "mean_pass_loss_over_all_pairs",
    "pass_cell_nll",
    "prepare_example",
    "row_major_order",
    "sample_permutation",
    "step_rng",
]
