"""Active-learning harness: synthetic data, the sampled surrogate and the loop."""

from .data import (
    TOY_FLIP, TOY_GAP, TOY_KERNEL, TOY_NOISY_REGION, TOY_SEED, ToyProblem, blob_centres,
    make_blobs, make_toy_1d, toy_true_prob,
)
from .loop import (
    LoopConfig, LoopHistory, RoundRecord, aggregate_histories, build_split, run_experiment,
    run_loop,
)
from .surrogate import RffConfig, RffSoftmaxSurrogate, fit_rff_softmax, sample_probs

__all__ = [
    "TOY_FLIP", "TOY_GAP", "TOY_KERNEL", "TOY_NOISY_REGION", "TOY_SEED", "ToyProblem",
    "blob_centres", "make_blobs", "make_toy_1d", "toy_true_prob",
    "LoopConfig", "LoopHistory", "RoundRecord", "aggregate_histories", "build_split",
    "run_experiment", "run_loop",
    "RffConfig", "RffSoftmaxSurrogate", "fit_rff_softmax", "sample_probs",
]
