"""GAN that maps basic comment features (content, topic, hierarchy) to the
five user historical-behavior features.

Behavior vectors live in [0, 1]^9: [comment_count | topic_distribution(5) |
sarcasm_rate | comment_frequency | reply_ratio], with counts and frequencies
log1p-scaled then min-max normalized against corpus constants that travel
with the checkpoint. The generator enforces the ranges by construction
(sigmoid on scalar slots, softmax on the topic block); the discriminator
scores pair plausibility with a sigmoid head and trains on real pairs
(PE, RB) as true, generated pairs (PE, GB) and mismatched pairs (NE, RB)
as false.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import (
    N_TOPICS,
    TOPICS,
    CommentRecord,
    Hierarchy,
    UserBehavior,
    Vocab,
    encode_text,
)
from .errors import ConfigError, DataError, TrainingDiverged

BEHAVIOR_DIM = 9
_SCALAR_SLOTS = (0, 6, 7, 8)  # count, sarcasm rate, frequency, reply ratio
_TOPIC_SLOTS = slice(1, 6)


@dataclass(frozen=True)
class BehaviorNorms:
    """log1p min-max constants for the two unbounded behavior features."""

    count_log_min: float
    count_log_max: float
    freq_log_min: float
    freq_log_max: float

    @classmethod
    def fit(cls, records: list[CommentRecord]) -> "BehaviorNorms":
        counts = [math.log1p(r.behavior.comment_count) for r in records if r.behavior]
        freqs = [math.log1p(r.behavior.comment_frequency) for r in records if r.behavior]
        if not counts:
            raise DataError("no behavior blocks to fit normalization constants")
        return cls(min(counts), max(counts), min(freqs), max(freqs))

    @staticmethod
    def _to_unit(value: float, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.5
        return min(1.0, max(0.0, (math.log1p(value) - lo) / (hi - lo)))

    @staticmethod
    def _from_unit(unit: float, lo: float, hi: float) -> float:
        return math.expm1(lo + unit * (hi - lo))

    def normalize(self, behavior: UserBehavior) -> np.ndarray:
        vec = np.empty(BEHAVIOR_DIM)
        vec[0] = self._to_unit(behavior.comment_count, self.count_log_min, self.count_log_max)
        vec[_TOPIC_SLOTS] = behavior.topic_distribution
        vec[6] = behavior.sarcasm_rate
        vec[7] = self._to_unit(behavior.comment_frequency, self.freq_log_min, self.freq_log_max)
        vec[8] = behavior.reply_ratio
        return vec

    def denormalize(self, vec: np.ndarray) -> UserBehavior:
        topic = np.clip(vec[_TOPIC_SLOTS], 0.0, None)
        topic = topic / topic.sum()
        return UserBehavior(
            comment_count=max(0, round(self._from_unit(float(vec[0]), self.count_log_min,
                                                       self.count_log_max))),
            topic_distribution=tuple(float(v) for v in topic),
            sarcasm_rate=float(np.clip(vec[6], 0.0, 1.0)),
            comment_frequency=max(0.0, self._from_unit(float(vec[7]), self.freq_log_min,
                                                       self.freq_log_max)),
            reply_ratio=float(np.clip(vec[8], 0.0, 1.0)),
        )


class CharEmbeddingEncoder:
    """Deterministic frozen character-embedding encoder for content pooling."""

    def __init__(self, vocab: Vocab, dim: int = 32, t_max: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.table = torch.tensor(
            rng.standard_normal((len(vocab), dim)) / math.sqrt(dim), dtype=torch.float32
        )
        self.table[0] = 0.0  # PAD stays silent
        self.vocab = vocab
        self.dim = dim
        self.t_max = t_max

    def positions(self, text: str) -> tuple[torch.Tensor, torch.Tensor]:
        seq = encode_text(text, self.vocab, self.t_max)
        ids = torch.tensor(seq.ids, dtype=torch.long)
        mask = torch.tensor(seq.mask, dtype=torch.bool)
        return self.table[ids], mask


@dataclass
class BasicCommentFeatures:
    """Mean-pooled content vector plus topic and hierarchy one-hots."""

    content: torch.Tensor
    topic_onehot: torch.Tensor
    hierarchy_onehot: torch.Tensor

    def as_vector(self) -> torch.Tensor:
        return torch.cat([self.content, self.topic_onehot, self.hierarchy_onehot])


def extract_basic_features(record: CommentRecord, encoder) -> BasicCommentFeatures:
    """Content = mean of per-position encoder outputs over valid positions."""
    per_position, mask = encoder.positions(record.text)
    content = per_position[mask].mean(dim=0)
    topic = torch.zeros(N_TOPICS)
    topic[TOPICS.index(record.topic)] = 1.0
    hier = torch.zeros(2)
    hier[0 if record.hierarchy is Hierarchy.TOP_LEVEL else 1] = 1.0
    return BasicCommentFeatures(content=content, topic_onehot=topic, hierarchy_onehot=hier)


def basic_feature_batch(records: list[CommentRecord], encoder) -> torch.Tensor:
    return torch.stack([extract_basic_features(r, encoder).as_vector() for r in records])


def behavior_batch(
    records: list[CommentRecord], encoder, norms: BehaviorNorms
) -> tuple[torch.Tensor, torch.Tensor]:
    """(PE, RB) tensors from the records that carry real behavior blocks."""
    with_behavior = [r for r in records if r.behavior is not None]
    if not with_behavior:
        raise DataError("no records with behavior blocks")
    pe = basic_feature_batch(with_behavior, encoder)
    rb = torch.tensor(
        np.stack([norms.normalize(r.behavior) for r in with_behavior]), dtype=torch.float32
    )
    return pe, rb


class BehaviorGenerator(nn.Module):
    """Per-modality input blocks, a fused hidden layer, range-safe output heads."""

    def __init__(self, content_dim: int, hidden: int = 64):
        super().__init__()
        self.content_dim = content_dim
        self.content_block = nn.Linear(content_dim, hidden)
        self.topic_block = nn.Linear(N_TOPICS, hidden // 4)
        self.hierarchy_block = nn.Linear(2, hidden // 4)
        self.fused = nn.Linear(hidden + hidden // 4 * 2, hidden)
        self.scalar_head = nn.Linear(hidden, len(_SCALAR_SLOTS))
        self.topic_head = nn.Linear(hidden, N_TOPICS)

    def forward(self, basic: torch.Tensor) -> torch.Tensor:
        content = basic[:, : self.content_dim]
        topic = basic[:, self.content_dim : self.content_dim + N_TOPICS]
        hier = basic[:, self.content_dim + N_TOPICS :]
        h = torch.cat(
            [
                F.relu(self.content_block(content)),
                F.relu(self.topic_block(topic)),
                F.relu(self.hierarchy_block(hier)),
            ],
            dim=1,
        )
        h = F.relu(self.fused(h))
        scalars = torch.sigmoid(self.scalar_head(h))
        topics = F.softmax(self.topic_head(h), dim=1)
        return torch.cat(
            [scalars[:, :1], topics, scalars[:, 1:2], scalars[:, 2:3], scalars[:, 3:4]], dim=1
        )


class BehaviorDiscriminator(nn.Module):
    """Sigmoid plausibility of a (basic features, behavior vector) pair."""

    def __init__(self, content_dim: int, hidden: int = 64):
        super().__init__()
        width = content_dim + N_TOPICS + 2 + BEHAVIOR_DIM
        self.net = nn.Sequential(
            nn.Linear(width, hidden), nn.ReLU(), nn.Linear(hidden, hidden // 2), nn.ReLU(),
            nn.Linear(hidden // 2, 1),
        )

    def forward(self, basic: torch.Tensor, behavior: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(torch.cat([basic, behavior], dim=1))).squeeze(-1)


def generate_behavior(generator: BehaviorGenerator, basic: torch.Tensor) -> torch.Tensor:
    """Batch of range-valid behavior vectors; simplex and [0,1] hold by construction."""
    return generator(basic)


def make_negative_pairs(pe: torch.Tensor, seed: int = 0) -> torch.Tensor:
    """Derange the basic-feature batch so every NE row faces a foreign RB."""
    n = pe.shape[0]
    if n < 2:
        raise DataError("need >=2 samples for negative pairing")
    offset = np.random.default_rng(seed).integers(1, n)
    idx = (torch.arange(n) + int(offset)) % n
    return pe[idx]


def generator_losses(
    discriminator: BehaviorDiscriminator,
    pe: torch.Tensor,
    gb: torch.Tensor,
    rb: torch.Tensor,
    lam: float,
) -> dict[str, torch.Tensor]:
    """Fooling term against D plus the closeness term pulling GB toward RB."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"behavior.lambda must lie in [0, 1], got {lam}")
    pred = discriminator(pe, gb)
    l_t = F.binary_cross_entropy(pred, torch.ones_like(pred))
    l_c = F.binary_cross_entropy(gb, rb)
    l_g = lam * l_t + (1.0 - lam) * l_c
    return {"l_t": l_t, "l_c": l_c, "l_g": l_g}


def discriminator_losses(
    discriminator: BehaviorDiscriminator,
    pe: torch.Tensor,
    rb: torch.Tensor,
    gb: torch.Tensor,
    ne: torch.Tensor,
) -> dict[str, torch.Tensor]:
    """L_r + L_f/2 + L_h/2 over real, generated and mismatched pairs."""
    pred_real = discriminator(pe, rb)
    pred_fake = discriminator(pe, gb.detach())
    pred_mismatch = discriminator(ne, rb)
    l_r = F.binary_cross_entropy(pred_real, torch.ones_like(pred_real))
    l_f = F.binary_cross_entropy(pred_fake, torch.zeros_like(pred_fake))
    l_h = F.binary_cross_entropy(pred_mismatch, torch.zeros_like(pred_mismatch))
    l_d = l_r + 0.5 * l_f + 0.5 * l_h
    return {"l_r": l_r, "l_f": l_f, "l_h": l_h, "l_d": l_d}


@dataclass
class BehaviorGanConfig:
    lambda_: float = 0.5
    content_dim: int = 32
    hidden: int = 64
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    t_max: int = 64
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError(f"behavior.lambda must lie in [0, 1], got {self.lambda_}")
        if self.batch_size < 2:
            raise ConfigError("behavior batch size must be >= 2 for negative pairing")


class BehaviorGanTrainer:
    def __init__(self, vocab: Vocab, norms: BehaviorNorms, config: BehaviorGanConfig):
        config.validate()
        self.vocab = vocab
        self.norms = norms
        self.config = config
        torch.manual_seed(config.seed)
        self.encoder = CharEmbeddingEncoder(
            vocab, dim=config.content_dim, t_max=config.t_max, seed=config.seed
        )
        self.generator = BehaviorGenerator(config.content_dim, hidden=config.hidden)
        self.discriminator = BehaviorDiscriminator(config.content_dim, hidden=config.hidden)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr_g)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr_d)
        self.rng = torch.Generator().manual_seed(config.seed)
        self.trained = False
        self._step = 0

    def step(self, pe: torch.Tensor, rb: torch.Tensor) -> dict[str, float]:
        gb = self.generator(pe)
        ne = make_negative_pairs(pe, seed=self.config.seed + self._step)
        d_parts = discriminator_losses(self.discriminator, pe, rb, gb, ne)
        self.opt_d.zero_grad()
        d_parts["l_d"].backward()
        self.opt_d.step()

        gb = self.generator(pe)
        g_parts = generator_losses(self.discriminator, pe, gb, rb, self.config.lambda_)
        self.opt_g.zero_grad()
        g_parts["l_g"].backward()
        self.opt_g.step()
        self._step += 1

        report = {k: v.item() for k, v in (d_parts | g_parts).items()}
        if not all(map(math.isfinite, report.values())):
            raise TrainingDiverged("behavior GAN produced a non-finite loss")
        return report

    def train(self, records: list[CommentRecord]) -> list[dict[str, float]]:
        pe_all, rb_all = behavior_batch(records, self.encoder, self.norms)
        history = []
        for _ in range(self.config.epochs):
            order = torch.randperm(pe_all.shape[0], generator=self.rng)
            epoch_reports = []
            for i in range(0, len(order), self.config.batch_size):
                idx = order[i : i + self.config.batch_size]
                if idx.numel() < 2:
                    continue
                epoch_reports.append(self.step(pe_all[idx], rb_all[idx]))
            history.append(
                {k: float(np.mean([r[k] for r in epoch_reports])) for k in epoch_reports[0]}
            )
        self.trained = True
        return history

    def synthesize(self, records: list[CommentRecord]) -> list[CommentRecord]:
        return synthesize_behaviors(records, self)

    def save(self, ckpt_dir: str | Path) -> None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "kind": "behavior_gan",
            "config": asdict(self.config),
            "norms": asdict(self.norms),
            "trained": self.trained,
            "vocab_size": len(self.vocab),
        }
        (ckpt_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        self.vocab.save(ckpt_dir / "vocab.txt")
        torch.save(self.generator.state_dict(), ckpt_dir / "generator.pt")
        torch.save(self.discriminator.state_dict(), ckpt_dir / "discriminator.pt")

    @classmethod
    def load(cls, ckpt_dir: str | Path) -> "BehaviorGanTrainer":
        ckpt_dir = Path(ckpt_dir)
        manifest = json.loads((ckpt_dir / "manifest.json").read_text(encoding="utf-8"))
        vocab = Vocab.load(ckpt_dir / "vocab.txt")
        trainer = cls(
            vocab,
            BehaviorNorms(**manifest["norms"]),
            BehaviorGanConfig(**manifest["config"]),
        )
        trainer.generator.load_state_dict(torch.load(ckpt_dir / "generator.pt"))
        trainer.discriminator.load_state_dict(torch.load(ckpt_dir / "discriminator.pt"))
        trainer.trained = manifest["trained"]
        return trainer


def synthesize_behaviors(
    records: list[CommentRecord], trainer: BehaviorGanTrainer
) -> list[CommentRecord]:
    """Fill missing behavior blocks from the trained generator.

    Records that already carry behavior come back untouched; filled ones are
    flagged behavior_source="generated" and denormalized to natural units.
    """
    if not trainer.trained:
        raise TrainingDiverged("behavior generator is not trained")
    out: list[CommentRecord] = []
    missing = [r for r in records if r.behavior is None]
    generated: dict[str, UserBehavior] = {}
    if missing:
        pe = basic_feature_batch(missing, trainer.encoder)
        with torch.no_grad():
            gb = trainer.generator(pe).numpy()
        for rec, vec in zip(missing, gb):
            generated[rec.id] = trainer.norms.denormalize(vec)
    for rec in records:
        if rec.behavior is None:
            out.append(
                replace(rec, behavior=generated[rec.id], behavior_source="generated")
            )
        else:
            out.append(rec)
    return out
