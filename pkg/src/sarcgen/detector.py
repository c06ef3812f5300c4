"""Fusion sarcasm classifier: a bidirectional text encoder, a ReLU user-feature
embedding, and a shared linear head over the concatenated representation.

Two encoder backends share one architecture: "small_scratch" is randomly
initialized (2 layers, 2 heads, d=64 by default) for fast deterministic runs;
"pretrained_checkpoint" loads previously saved encoder weights from disk.

The user feature vector x has 16 columns in a fixed order:
[topic one-hot (5) | hierarchy one-hot (2) | comment_count | topic_distribution
(5) | sarcasm_rate | comment_frequency | reply_ratio], counts and frequencies
log1p min-max normalized. The comment's own label is never part of x.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .behavior_gan import BehaviorNorms
from .corpus import (
    N_TOPICS,
    TOPICS,
    CommentRecord,
    Hierarchy,
    Label,
    Vocab,
    encode_text,
)
from .errors import ConfigError, DataError, TrainingDiverged
from .metrics import MetricsReport, compute_metrics

USER_FEATURE_DIM = 16
# columns of x occupied by each behavior feature (ablation drops whole blocks)
BEHAVIOR_COLUMNS = {
    "CC": [7],
    "TD": [8, 9, 10, 11, 12],
    "SR": [13],
    "CF": [14],
    "RR": [15],
}
CONTEXT_SEPARATOR = "␟"  # encodes as UNK unless the vocab knows it

ENCODER_MODES = ("small_scratch", "pretrained_checkpoint")


@dataclass
class DetectorConfig:
    encoder: str = "small_scratch"
    d: int = 64
    m: int = 32
    lr: float = 1e-4
    batch: int = 32
    patience: int = 3
    epochs: int = 20
    seed: int = 0
    t_max: int = 64
    encoder_layers: int = 2
    encoder_heads: int = 2
    encoder_checkpoint: str | None = None
    user_hidden: tuple[int, ...] = ()

    def validate(self) -> None:
        if self.encoder not in ENCODER_MODES:
            raise ConfigError(f"det.encoder must be one of {ENCODER_MODES}, got {self.encoder!r}")
        if self.encoder == "pretrained_checkpoint" and not self.encoder_checkpoint:
            raise ConfigError("det.encoder=pretrained_checkpoint needs encoder_checkpoint")
        if self.d % self.encoder_heads:
            raise ConfigError(f"det.d ({self.d}) must be divisible by heads ({self.encoder_heads})")
        if self.batch < 1:
            raise ConfigError(f"det.batch must be positive, got {self.batch}")
        if self.patience < 0:
            raise ConfigError(f"det.patience must be >= 0, got {self.patience}")
        if self.lr <= 0:
            raise ConfigError(f"det.lr must be positive, got {self.lr}")


class ScratchTextEncoder(nn.Module):
    """Bidirectional transformer encoder; H is the hidden state at position 0."""

    def __init__(self, vocab_size: int, d: int = 64, layers: int = 2, heads: int = 2,
                 t_max: int = 64, dropout: float = 0.0):
        super().__init__()
        from .comment_gan.model import sinusoidal_positions

        self.vocab_size = vocab_size
        self.d = d
        self.t_max = t_max
        self.embed = nn.Embedding(vocab_size, d)
        self.register_buffer("positions", sinusoidal_positions(t_max, d))
        layer = nn.TransformerEncoderLayer(
            d, heads, 4 * d, dropout=dropout, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, layers)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        t = ids.shape[1]
        x = self.embed(ids) + self.positions[:t]
        h = self.encoder(x, src_key_padding_mask=~mask)
        return h[:, 0]


def save_text_encoder(encoder: ScratchTextEncoder, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    layer = encoder.encoder.layers[0]
    manifest = {
        "vocab_size": encoder.vocab_size,
        "d": encoder.d,
        "layers": len(encoder.encoder.layers),
        "heads": layer.self_attn.num_heads,
        "t_max": encoder.t_max,
    }
    torch.save({"manifest": manifest, "state": encoder.state_dict()}, path)


def load_text_encoder(path: str | Path) -> ScratchTextEncoder:
    blob = torch.load(path, weights_only=False)
    encoder = ScratchTextEncoder(**blob["manifest"])
    encoder.load_state_dict(blob["state"])
    return encoder


def build_text_encoder(config: DetectorConfig, vocab_size: int) -> ScratchTextEncoder:
    if config.encoder == "pretrained_checkpoint":
        encoder = load_text_encoder(config.encoder_checkpoint)
        if encoder.vocab_size != vocab_size:
            raise DataError(
                f"encoder checkpoint vocab size {encoder.vocab_size} != corpus {vocab_size}"
            )
        return encoder
    return ScratchTextEncoder(
        vocab_size, d=config.d, layers=config.encoder_layers,
        heads=config.encoder_heads, t_max=config.t_max,
    )


def user_feature_vector(record: CommentRecord, norms: BehaviorNorms) -> np.ndarray:
    """The 16-column x described in the module docstring."""
    if record.behavior is None:
        raise DataError(
            f"record {record.id} is missing its behavior block; "
            "run synthesize_behaviors (CLI: behavior-fill) first"
        )
    x = np.zeros(USER_FEATURE_DIM)
    x[TOPICS.index(record.topic)] = 1.0
    x[N_TOPICS + (0 if record.hierarchy is Hierarchy.TOP_LEVEL else 1)] = 1.0
    x[7:] = norms.normalize(record.behavior)
    return x


class FusionModel(nn.Module):
    """encode -> embed user -> concatenate -> one shared linear head -> sigmoid."""

    def __init__(self, encoder: ScratchTextEncoder, m: int = 32,
                 user_hidden: tuple[int, ...] = ()):
        super().__init__()
        self.encoder = encoder
        widths = [USER_FEATURE_DIM, *user_hidden, m]
        self.user_mlp = nn.ModuleList(
            nn.Linear(a, b) for a, b in zip(widths, widths[1:])
        )
        self.head = nn.Linear(encoder.d + m, 1)
        self.register_buffer("feature_mask", torch.ones(USER_FEATURE_DIM))

    def embed_user(self, x: torch.Tensor) -> torch.Tensor:
        h = x * self.feature_mask
        for linear in self.user_mlp:
            h = F.relu(linear(h))
        return h

    def fuse(self, ids: torch.Tensor, mask: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([self.encoder(ids, mask), self.embed_user(x)], dim=1)

    def forward(self, ids, mask, x) -> torch.Tensor:
        combined = self.fuse(ids, mask, x)
        return torch.sigmoid(self.head(combined)).squeeze(-1)


def fuse_and_classify(model: FusionModel, h: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Probability of sarcasm from precomputed text and user representations."""
    z = model.head(torch.cat([h, u], dim=1)).squeeze(-1)
    return torch.sigmoid(z)


def _record_text(record: CommentRecord) -> str:
    if record.context:
        return f"{record.text}{CONTEXT_SEPARATOR}{record.context}"
    return record.text


def detector_tensors(records: list[CommentRecord], vocab: Vocab, norms: BehaviorNorms,
                     t_max: int):
    ids, masks, xs, ys = [], [], [], []
    for rec in records:
        seq = encode_text(_record_text(rec), vocab, t_max)
        ids.append(seq.ids)
        masks.append(seq.mask)
        xs.append(user_feature_vector(rec, norms))
        ys.append(1.0 if rec.label is Label.SARCASTIC else 0.0)
    return (
        torch.tensor(ids, dtype=torch.long),
        torch.tensor(masks, dtype=torch.bool),
        torch.tensor(np.stack(xs), dtype=torch.float32),
        torch.tensor(ys, dtype=torch.float32),
    )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val: MetricsReport


class Detector:
    """Bundled trained model + vocab + normalization constants + config."""

    def __init__(self, model: FusionModel, vocab: Vocab, norms: BehaviorNorms,
                 config: DetectorConfig):
        self.model = model
        self.vocab = vocab
        self.norms = norms
        self.config = config

    def set_feature_mask(self, mask: np.ndarray | None) -> None:
        with torch.no_grad():
            if mask is None:
                self.model.feature_mask.fill_(1.0)
            else:
                self.model.feature_mask.copy_(torch.tensor(mask, dtype=torch.float32))

    @torch.no_grad()
    def probabilities(self, records: list[CommentRecord]) -> np.ndarray:
        self.model.eval()
        out = []
        bs = self.config.batch
        for i in range(0, len(records), bs):
            ids, mask, x, _ = detector_tensors(
                records[i : i + bs], self.vocab, self.norms, self.config.t_max
            )
            out.append(self.model(ids, mask, x).numpy())
        return np.concatenate(out) if out else np.empty(0)

    def predict(self, records: list[CommentRecord]) -> list[dict]:
        """Per-record probability and thresholded label; y >= 0.5 is sarcastic."""
        probs = self.probabilities(records)
        return [
            {
                "id": rec.id,
                "prob": float(p),
                "label": (Label.SARCASTIC if p >= 0.5 else Label.NON_SARCASTIC).value,
            }
            for rec, p in zip(records, probs)
        ]

    def evaluate(self, records: list[CommentRecord]) -> MetricsReport:
        preds = [Label(p["label"]) for p in self.predict(records)]
        return compute_metrics(preds, [r.label for r in records])

    @torch.no_grad()
    def export_embeddings(self, records: list[CommentRecord], path: str | Path) -> None:
        """CSV of id, gold label, probability and the fused vector per record."""
        self.model.eval()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        width = self.model.head.in_features
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("id,label,prob," + ",".join(f"e{i}" for i in range(width)) + "\n")
            bs = self.config.batch
            for i in range(0, len(records), bs):
                chunk = records[i : i + bs]
                ids, mask, x, _ = detector_tensors(chunk, self.vocab, self.norms,
                                                   self.config.t_max)
                combined = self.model.fuse(ids, mask, x)
                probs = torch.sigmoid(self.model.head(combined)).squeeze(-1)
                for rec, p, vec in zip(chunk, probs, combined):
                    cells = ",".join(f"{v:.8e}" for v in vec.tolist())
                    fh.write(f"{rec.id},{rec.label.value},{float(p):.8e},{cells}\n")

    def save(self, ckpt_dir: str | Path) -> None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        cfg = asdict(self.config)
        cfg["user_hidden"] = list(cfg["user_hidden"])
        manifest = {"kind": "detector", "config": cfg, "norms": asdict(self.norms)}
        (ckpt_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        self.vocab.save(ckpt_dir / "vocab.txt")
        torch.save(self.model.state_dict(), ckpt_dir / "model.pt")

    @classmethod
    def load(cls, ckpt_dir: str | Path) -> "Detector":
        ckpt_dir = Path(ckpt_dir)
        manifest = json.loads((ckpt_dir / "manifest.json").read_text(encoding="utf-8"))
        cfg = manifest["config"]
        cfg["user_hidden"] = tuple(cfg["user_hidden"])
        config = DetectorConfig(**cfg)
        vocab = Vocab.load(ckpt_dir / "vocab.txt")
        norms = BehaviorNorms(**manifest["norms"])
        torch.manual_seed(config.seed)
        encoder = ScratchTextEncoder(
            len(vocab), d=config.d, layers=config.encoder_layers,
            heads=config.encoder_heads, t_max=config.t_max,
        )
        model = FusionModel(encoder, m=config.m, user_hidden=config.user_hidden)
        model.load_state_dict(torch.load(ckpt_dir / "model.pt"))
        return cls(model, vocab, norms, config)


def train_detector(
    train_records: list[CommentRecord],
    val_records: list[CommentRecord],
    vocab: Vocab,
    config: DetectorConfig,
    feature_mask: np.ndarray | None = None,
) -> tuple[Detector, list[EpochRecord]]:
    """BCE training with early stopping on validation sarcastic-class F1.

    Stops once the epochs since the best validation F1 exceed the patience;
    the returned detector carries the best-epoch weights.
    """
    config.validate()
    if not train_records or not val_records:
        raise DataError("train and validation splits must be non-empty")
    missing = sum(1 for r in [*train_records, *val_records] if r.behavior is None)
    if missing:
        raise DataError(
            f"{missing} records are missing behavior blocks; "
            "run synthesize_behaviors (CLI: behavior-fill) first"
        )
    torch.manual_seed(config.seed)
    norms = BehaviorNorms.fit(train_records)
    encoder = build_text_encoder(config, len(vocab))
    model = FusionModel(encoder, m=config.m, user_hidden=config.user_hidden)
    detector = Detector(model, vocab, norms, config)
    detector.set_feature_mask(feature_mask)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = torch.Generator().manual_seed(config.seed)

    ids, mask, x, y = detector_tensors(train_records, vocab, norms, config.t_max)
    best_f1 = -1.0
    best_state = None
    since_best = 0
    history: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = torch.randperm(len(train_records), generator=rng)
        losses = []
        for i in range(0, len(order), config.batch):
            idx = order[i : i + config.batch]
            probs = model(ids[idx], mask[idx], x[idx])
            loss = F.binary_cross_entropy(probs, y[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged("detector loss is non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val_report = detector.evaluate(val_records)
        history.append(
            EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), val=val_report)
        )
        f1 = val_report.sarcastic.f1
        if f1 > best_f1:
            best_f1 = f1
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    return detector, history
