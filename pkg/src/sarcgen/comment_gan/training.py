"""Two-stage comment GAN training: teacher-forced pretraining, then joint
adversarial updates (n_critic critic steps, one generator step, one
classifier step per round)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from ..corpus import (
    CommentRecord,
    Vocab,
    condition_of,
    encode_text,
)
from ..errors import ConfigError, TrainingDiverged
from .losses import (
    classifier_loss,
    discriminator_loss,
    generator_loss,
    label_nll,
    pretrain_loss,
)
from .model import (
    NOISE_DIM,
    CommentDiscriminator,
    CommentGenerator,
    SentimentClassifier,
    sample_noise,
)


@dataclass
class AdversarialConfig:
    alpha: float = 0.7
    lambda_gp: float = 10.0
    n_critic: int = 5
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    emb_dim: int = 64
    channels: int = 64
    kernel_sizes: tuple[int, ...] = (2, 3, 4, 5)
    t_max: int = 64
    batch_size: int = 32
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    lr_c: float = 1e-4
    pretrain_lr: float = 1e-3
    pretrain_epochs: int = 5
    adversarial_steps: int = 200
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"gan.alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.lambda_gp <= 0:
            raise ConfigError(f"gan.lambda_gp must be positive, got {self.lambda_gp}")
        if self.n_critic < 1:
            raise ConfigError(f"gan.n_critic must be a positive integer, got {self.n_critic}")
        if self.t_max < 3:
            raise ConfigError(f"gan.t_max must be >= 3, got {self.t_max}")
        if self.batch_size < 1:
            raise ConfigError(f"gan.batch must be positive, got {self.batch_size}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"gan.d_model ({self.d_model}) must be divisible by heads ({self.n_heads})"
            )


@dataclass
class StepReport:
    d_loss: float
    g_adv_loss: float
    g_cls_loss: float
    g_loss: float
    c_loss: float

    def values(self) -> list[float]:
        return [self.d_loss, self.g_adv_loss, self.g_cls_loss, self.g_loss, self.c_loss]


def encode_batch(records: list[CommentRecord], vocab: Vocab, t_max: int):
    """ids (B, T), conditions (B, 9), labels (B,) tensors for a record batch."""
    ids = torch.tensor(
        [encode_text(r.text, vocab, t_max).ids for r in records], dtype=torch.long
    )
    f = torch.tensor([condition_of(r).values for r in records], dtype=torch.float32)
    y = torch.tensor([r.label.value for r in records], dtype=torch.long)
    return ids, f, y


class CommentGanTrainer:
    """Owns the three models, their optimizers and the training RNG."""

    def __init__(self, vocab: Vocab, config: AdversarialConfig):
        config.validate()
        self.vocab = vocab
        self.config = config
        torch.manual_seed(config.seed)
        self.generator = CommentGenerator(
            len(vocab),
            d_model=config.d_model,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            t_max=config.t_max,
        )
        self.discriminator = CommentDiscriminator(
            len(vocab),
            emb_dim=config.emb_dim,
            kernel_sizes=config.kernel_sizes,
            channels=config.channels,
        )
        self.classifier = SentimentClassifier(
            len(vocab),
            emb_dim=config.emb_dim,
            kernel_sizes=config.kernel_sizes,
            channels=config.channels,
        )
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr_g, betas=(0.5, 0.9))
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=config.lr_d, betas=(0.5, 0.9)
        )
        self.opt_c = torch.optim.Adam(self.classifier.parameters(), lr=config.lr_c)
        self.opt_pre = torch.optim.Adam(self.generator.parameters(), lr=config.pretrain_lr)
        self.rng = torch.Generator().manual_seed(config.seed)

    def _batches(self, records: list[CommentRecord]):
        order = torch.randperm(len(records), generator=self.rng).tolist()
        bs = self.config.batch_size
        for i in range(0, len(records), bs):
            chunk = [records[j] for j in order[i : i + bs]]
            if len(chunk) >= 2:  # GP interpolation and derangements need pairs
                yield encode_batch(chunk, self.vocab, self.config.t_max)

    def pretrain_epoch(self, records: list[CommentRecord]) -> list[float]:
        """One teacher-forcing pass; returns the per-batch NLL trajectory."""
        losses = []
        for ids, f, _ in self._batches(records):
            z = sample_noise(ids.shape[0], generator=self.rng)
            loss = pretrain_loss(self.generator, ids, z, f)
            if not torch.isfinite(loss):
                raise TrainingDiverged("pretraining loss is non-finite")
            self.opt_pre.zero_grad()
            loss.backward()
            self.opt_pre.step()
            losses.append(loss.item())
        self.generator.pretrained = True
        return losses

    def adversarial_step(self, batch) -> StepReport:
        """n_critic critic updates, one generator update, one classifier update."""
        if not self.generator.pretrained:
            raise TrainingDiverged("generator must be pretrained before adversarial training")
        cfg = self.config
        real_ids, f, labels = batch

        d_loss = 0.0
        for _ in range(cfg.n_critic):
            z = sample_noise(real_ids.shape[0], generator=self.rng)
            fake = self.generator.generate_soft(z, f, cfg.t_max).detach()
            loss_d, _ = discriminator_loss(
                self.discriminator, real_ids, fake, f, cfg.lambda_gp, generator=self.rng
            )
            self.opt_d.zero_grad()
            loss_d.backward()
            self.opt_d.step()
            d_loss = loss_d.item()

        z = sample_noise(real_ids.shape[0], generator=self.rng)
        fake = self.generator.generate_soft(z, f, cfg.t_max)
        adv = -self.discriminator(fake, f).mean()
        cls = label_nll(self.classifier(fake, f), labels)
        g_loss = generator_loss(adv, cls, cfg.alpha)
        self.opt_g.zero_grad()
        g_loss.backward()
        self.opt_g.step()

        c_loss = classifier_loss(
            self.classifier, real_ids, f, labels, fake.detach(), f, labels
        )
        self.opt_c.zero_grad()
        c_loss.backward()
        self.opt_c.step()

        report = StepReport(
            d_loss=d_loss,
            g_adv_loss=adv.item(),
            g_cls_loss=cls.item(),
            g_loss=g_loss.item(),
            c_loss=c_loss.item(),
        )
        if not all(map(torch.isfinite, map(torch.tensor, report.values()))):
            raise TrainingDiverged("adversarial step produced a non-finite loss")
        return report

    def adversarial_epochs(self, records: list[CommentRecord], steps: int) -> list[StepReport]:
        reports: list[StepReport] = []
        while len(reports) < steps:
            for batch in self._batches(records):
                reports.append(self.adversarial_step(batch))
                if len(reports) >= steps:
                    break
        return reports

    # -- checkpointing ------------------------------------------------------

    def save(self, ckpt_dir: str | Path) -> None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "kind": "comment_gan",
            "vocab_size": len(self.vocab),
            "config": _config_dict(self.config),
            "pretrained": self.generator.pretrained,
        }
        (ckpt_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        self.vocab.save(ckpt_dir / "vocab.txt")
        torch.save(self.generator.state_dict(), ckpt_dir / "generator.pt")
        torch.save(self.discriminator.state_dict(), ckpt_dir / "discriminator.pt")
        torch.save(self.classifier.state_dict(), ckpt_dir / "classifier.pt")

    @classmethod
    def load(cls, ckpt_dir: str | Path) -> "CommentGanTrainer":
        ckpt_dir = Path(ckpt_dir)
        manifest = json.loads((ckpt_dir / "manifest.json").read_text(encoding="utf-8"))
        vocab = Vocab.load(ckpt_dir / "vocab.txt")
        cfg = manifest["config"]
        cfg["kernel_sizes"] = tuple(cfg["kernel_sizes"])
        trainer = cls(vocab, AdversarialConfig(**cfg))
        trainer.generator.load_state_dict(torch.load(ckpt_dir / "generator.pt"))
        trainer.discriminator.load_state_dict(torch.load(ckpt_dir / "discriminator.pt"))
        trainer.classifier.load_state_dict(torch.load(ckpt_dir / "classifier.pt"))
        trainer.generator.pretrained = manifest["pretrained"]
        return trainer


def _config_dict(config: AdversarialConfig) -> dict:
    d = asdict(config)
    d["kernel_sizes"] = list(d["kernel_sizes"])
    return d
