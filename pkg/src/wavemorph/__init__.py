"""Pitch-contour conversion with learnable wavelet analysis scales.

The package couples a Ricker-kernel convolution front end whose analysis
scales are trained by gradient descent with a pair of adversarial generators
that map pitch-contour coefficient planes between two expressive classes.
"""

from .corpus import (
    PROFILE_PRESETS,
    AttitudeProfile,
    Corpus,
    UtteranceSkeleton,
    generate_corpus,
    load_corpus,
    random_skeleton,
    read_track_csv,
    synth_pair,
    toy_contrast_pair,
    write_track_csv,
)
from .errors import (
    AlignmentError,
    ContractError,
    CorpusError,
    DimensionError,
    DomainError,
    EvalError,
    PipelineError,
    TrainingDiverged,
    WavemorphError,
)
from .estimators import AttitudeConverter, ContourWaveletTransform
from .evaluation import (
    EvalReport,
    corpus_markers,
    cwt_as_scales,
    evaluate,
    rmse_hz,
    scale_histogram,
    write_report,
)
from .networks import ArchConfig, Classifier, Discriminator, Generator
from .pipeline import F0Track, ParallelPair, align_pair, prepare
from .tensor import Adam, Tape, Tensor, backward, zero_grads
from .training import (
    ModelBundle,
    TrainConfig,
    convert,
    load_bundle,
    new_bundle,
    pretrain,
    save_bundle,
    train_dualgan,
)
from .wavelets import (
    CoefficientPlane,
    ReconstructionConstants,
    ScaleBank,
    adaptive_scale_select,
    dense_scale_grid,
    encode,
    reconstruct,
    ricker_kernel,
    ricker_support,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AlignmentError",
    "ArchConfig",
    "AttitudeConverter",
    "AttitudeProfile",
    "Classifier",
    "CoefficientPlane",
    "ContourWaveletTransform",
    "ContractError",
    "Corpus",
    "CorpusError",
    "DimensionError",
    "Discriminator",
    "DomainError",
    "EvalError",
    "EvalReport",
    "F0Track",
    "Generator",
    "ModelBundle",
    "PROFILE_PRESETS",
    "ParallelPair",
    "PipelineError",
    "ReconstructionConstants",
    "ScaleBank",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "UtteranceSkeleton",
    "WavemorphError",
    "adaptive_scale_select",
    "align_pair",
    "backward",
    "convert",
    "corpus_markers",
    "cwt_as_scales",
    "dense_scale_grid",
    "encode",
    "evaluate",
    "generate_corpus",
    "load_bundle",
    "load_corpus",
    "new_bundle",
    "prepare",
    "pretrain",
    "random_skeleton",
    "read_track_csv",
    "reconstruct",
    "ricker_kernel",
    "ricker_support",
    "rmse_hz",
    "save_bundle",
    "scale_histogram",
    "synth_pair",
    "toy_contrast_pair",
    "train_dualgan",
    "write_report",
    "write_track_csv",
    "zero_grads",
]
