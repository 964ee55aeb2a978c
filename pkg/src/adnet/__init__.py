"""Adversarial decomposition of sentence representations into continuous
meaning and form vectors: tensors with reverse-mode autodiff, a GRU
encoder/decoder with twin latent heads, Wasserstein-style critics, the
two-stage training loop, and the evaluation protocols."""

from .tensor import (
    Tensor,
    Tape,
    ShapeError,
    NumericError,
    TapeError,
    apply_primitive,
    backward,
)
from .optim import OptimizerState, make_optimizer, optimizer_step, clip_weights
from .model import ModelConfig, init_model, load_checkpoint, save_checkpoint
from .training import LossWeights, OptimSettings, TrainConfig, train
from .evaluation import EvalConfig, evaluate_model, transfer_corpus
from .synth import default_register_spec, generate_corpora, as_corpus_pair
from .text import build_corpus_pair, load_corpus_pair

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericError",
    "TapeError",
    "apply_primitive",
    "backward",
    "OptimizerState",
    "make_optimizer",
    "optimizer_step",
    "clip_weights",
    "ModelConfig",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "LossWeights",
    "OptimSettings",
    "TrainConfig",
    "train",
    "EvalConfig",
    "evaluate_model",
    "transfer_corpus",
    "default_register_spec",
    "generate_corpora",
    "as_corpus_pair",
    "build_corpus_pair",
    "load_corpus_pair",
]

__version__ = "0.1.0"
