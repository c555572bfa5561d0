"""Reversible stage-to-stage transformer chains with greedy module reuse.

Train a chain of reversible transformers across an ordered sequence of
unpaired sample domains, let each new stage try to recycle the previous
module, and read off the compressed development descriptor.
"""

from .backend import backend_name
from .chain import (ChainState, CurveRecord, DecisionRecord, Descriptor,
                    EvalRow, descriptor, evaluate_chain, render_descriptor,
                    run_chain, transform_features, transform_to_stage)
from .errors import (FormatError, StagechainError, TrainingError,
                     ValidationError)
from .model import (DEFAULT_TARGETS, DomainSequence, RunConfig, Sample,
                    StageDataset, ValidationReport, validate_sequence)
from .scorer import (AgeEstimator, ScoreReport, estimate, estimate_batch,
                     fit_estimator, score_ages, score_error)
from .synth import (GeneratedProcess, ProcessSpec, PROCESS_BUILDERS,
                    generate_process, ground_truth_moment_map,
                    make_all_distinct_spec, make_linear_chain_spec,
                    make_linear_pair, make_shared_middle_spec, pooled_labels,
                    stage_basis, stage_population_moments)
from .transformer import (AffineParams, MlpParams, ReversibleTransformer,
                          TrainPlan, apply_backward, apply_forward,
                          copy_transformer, cycle_loss, dist_loss,
                          init_transformer, spectral_init, train,
                          transform_backward, transform_forward)

__version__ = "0.1.0"

__all__ = [
    "AffineParams", "AgeEstimator", "ChainState", "CurveRecord",
    "DecisionRecord", "Descriptor", "DomainSequence", "EvalRow",
    "FormatError", "GeneratedProcess", "MlpParams", "PROCESS_BUILDERS",
    "ProcessSpec", "ReversibleTransformer", "RunConfig", "Sample",
    "ScoreReport", "StageDataset", "StagechainError", "TrainPlan",
    "TrainingError", "ValidationError", "ValidationReport",
    "DEFAULT_TARGETS", "apply_backward", "apply_forward", "backend_name",
    "copy_transformer", "cycle_loss", "descriptor", "dist_loss", "estimate",
    "estimate_batch", "evaluate_chain", "fit_estimator", "generate_process",
    "ground_truth_moment_map", "init_transformer", "make_all_distinct_spec",
    "make_linear_chain_spec", "make_linear_pair", "make_shared_middle_spec",
    "pooled_labels", "render_descriptor", "run_chain", "score_ages",
    "score_error", "spectral_init", "stage_basis",
    "stage_population_moments", "train", "transform_backward",
    "transform_features", "transform_forward", "transform_to_stage",
    "validate_sequence", "__version__",
]
