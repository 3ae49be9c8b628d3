"""Transducer losses robust to incomplete and noisy transcripts.

The loss family (RNN-T, Star-T, Bypass-T, TRT) is expressed as weighted
automata; :func:`loss_and_grad` evaluates any member on a dense joint output.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CyclicGraph,
    DegenerateVocabulary,
    EmptyReference,
    InvalidTarget,
    NoPath,
    NonFiniteLoss,
    ShapeMismatch,
    TooManyPaths,
    TransducerError,
)
from .lattices import LossKind, build_grid, build_temporal_schema, build_unit_schema  # noqa: E402
from .loss import (  # noqa: E402
    LossConfig,
    LossResult,
    PenaltySchedule,
    SkipTokenMode,
    batch_loss,
    loss_and_grad,
    loss_and_grad_reference,
    penalty_trajectory,
)
from .metrics import EditCounts, align, wer, werd, werdr  # noqa: E402
from .decoding import DecoderBudget, greedy_decode  # noqa: E402

__all__ = [
    "CyclicGraph",
    "DecoderBudget",
    "DegenerateVocabulary",
    "EditCounts",
    "EmptyReference",
    "InvalidTarget",
    "LossConfig",
    "LossKind",
    "LossResult",
    "NoPath",
    "NonFiniteLoss",
    "PenaltySchedule",
    "ShapeMismatch",
    "SkipTokenMode",
    "TooManyPaths",
    "TransducerError",
    "align",
    "batch_loss",
    "build_grid",
    "build_temporal_schema",
    "build_unit_schema",
    "greedy_decode",
    "loss_and_grad",
    "loss_and_grad_reference",
    "penalty_trajectory",
    "wer",
    "werd",
    "werdr",
]
