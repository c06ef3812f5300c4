from .losses import (
    classifier_loss,
    discriminator_loss,
    generator_loss,
    gradient_penalty,
    label_nll,
    pretrain_loss,
    sequence_nll,
)
from .model import (
    NOISE_DIM,
    CommentDiscriminator,
    CommentGenerator,
    SentimentClassifier,
    sample_noise,
)
from .training import AdversarialConfig, CommentGanTrainer, StepReport, encode_batch

__all__ = [
    "AdversarialConfig",
    "CommentDiscriminator",
    "CommentGanTrainer",
    "CommentGenerator",
    "NOISE_DIM",
    "SentimentClassifier",
    "StepReport",
    "classifier_loss",
    "discriminator_loss",
    "encode_batch",
    "generator_loss",
    "gradient_penalty",
    "label_nll",
    "pretrain_loss",
    "sample_noise",
    "sequence_nll",
]
