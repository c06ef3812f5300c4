"""Conditional sequence GAN models.

Generator: transformer decoder seeded by a memory vector projected from
[noise; condition]. Discriminator: multi-kernel TextCNN Wasserstein critic
over token embeddings concatenated with the broadcast condition. Classifier:
same convolutional shape with independent weights and a 2-way log-prob head.

The generator emits hard token ids at inference and per-step softmax
distributions during adversarial training; the critic and classifier embed
soft sequences as probability-weighted embedding averages so the whole fake
path stays differentiable.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..corpus import CONDITION_DIM, EOS_ID, PAD_ID, SOS_ID, TokenSequence

NOISE_DIM = 128


def sinusoidal_positions(t_max: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(t_max, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model)
    )
    enc = torch.zeros(t_max, d_model, dtype=torch.float64)
    enc[:, 0::2] = torch.sin(pos * div)
    enc[:, 1::2] = torch.cos(pos * div[: d_model // 2])
    return enc.float()


def sample_noise(
    batch: int, generator: torch.Generator | None = None, dtype=torch.float32
) -> torch.Tensor:
    """Standard normal latent noise, one 128-vector per sample."""
    return torch.randn(batch, NOISE_DIM, generator=generator, dtype=dtype)


class CommentGenerator(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_model: int = 128,
        n_layers: int = 2,
        n_heads: int = 4,
        d_ff: int | None = None,
        t_max: int = 64,
        noise_dim: int = NOISE_DIM,
        cond_dim: int = CONDITION_DIM,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.t_max = t_max
        self.noise_dim = noise_dim
        self.cond_dim = cond_dim
        self.embed = nn.Embedding(vocab_size, d_model)
        self.register_buffer("positions", sinusoidal_positions(t_max, d_model))
        self.proj = nn.Linear(noise_dim + cond_dim, d_model)
        layer = nn.TransformerDecoderLayer(
            d_model, n_heads, d_ff or 4 * d_model, dropout=dropout, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(layer, n_layers)
        self.out = nn.Linear(d_model, vocab_size)
        self.pretrained = False

    def project_memory(self, z: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        """ReLU(W_proj [z;f] + b_proj): the one-slot decoding memory."""
        if z.shape[-1] != self.noise_dim:
            raise ValueError(f"noise must have dim {self.noise_dim}, got {z.shape[-1]}")
        if f.shape[-1] != self.cond_dim:
            raise ValueError(f"condition must have dim {self.cond_dim}, got {f.shape[-1]}")
        return F.relu(self.proj(torch.cat([z, f], dim=-1)))

    def _decode(self, input_emb: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        t = input_emb.shape[1]
        pos = self.positions
        if t > pos.shape[0]:
            pos = sinusoidal_positions(t, self.d_model)
        pos = pos[:t].to(dtype=input_emb.dtype, device=input_emb.device)
        causal = torch.triu(
            torch.full((t, t), float("-inf"), dtype=input_emb.dtype, device=input_emb.device),
            diagonal=1,
        )
        h = self.decoder(input_emb + pos, memory.unsqueeze(1), tgt_mask=causal)
        return self.out(h)

    def log_probs(self, ids: torch.Tensor, z: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        """Teacher-forced next-token log-distributions: (B, T-1, V) for ids[:, 1:]."""
        memory = self.project_memory(z, f)
        logits = self._decode(self.embed(ids[:, :-1]), memory)
        return F.log_softmax(logits, dim=-1)

    @torch.no_grad()
    def generate(
        self,
        z: torch.Tensor,
        f: torch.Tensor,
        t_max: int | None = None,
        mode: str = "greedy",
        generator: torch.Generator | None = None,
    ) -> tuple[list[TokenSequence], torch.Tensor]:
        """Autoregressive generation from SOS until EOS or t_max.

        Returns the padded sequences plus the per-step log-softmax rows,
        shape (B, t_max - 1, V); rows past a sequence's EOS are the
        distributions the model produced before padding took over.
        """
        if mode not in ("greedy", "sample"):
            raise ValueError(f"mode must be greedy or sample, got {mode!r}")
        t_max = t_max or self.t_max
        if t_max < 3:
            raise ValueError(f"t_max must be >= 3, got {t_max}")
        batch = z.shape[0]
        memory = self.project_memory(z, f)
        ids = torch.full((batch, 1), SOS_ID, dtype=torch.long)
        steps = []
        done = torch.zeros(batch, dtype=torch.bool)
        for _ in range(t_max - 1):
            logits = self._decode(self.embed(ids), memory)[:, -1]
            logp = F.log_softmax(logits, dim=-1)
            steps.append(logp)
            if mode == "greedy":
                nxt = logp.argmax(dim=-1)
            else:
                nxt = torch.multinomial(logp.exp(), 1, generator=generator).squeeze(1)
            nxt = torch.where(done, torch.full_like(nxt, PAD_ID), nxt)
            done |= nxt == EOS_ID
            ids = torch.cat([ids, nxt.unsqueeze(1)], dim=1)
        sequences = []
        for row in ids.tolist():
            out, finished = [SOS_ID], False
            for tid in row[1:]:
                if finished or tid == PAD_ID:
                    break
                out.append(tid)
                finished = tid == EOS_ID
            if not finished:
                out = out[: t_max - 1] + [EOS_ID]
            length = len(out)
            out += [PAD_ID] * (t_max - length)
            sequences.append(
                TokenSequence(
                    ids=tuple(out),
                    mask=tuple(i < length for i in range(t_max)),
                    length=length,
                )
            )
        return sequences, torch.stack(steps, dim=1)

    def generate_soft(
        self, z: torch.Tensor, f: torch.Tensor, t_max: int | None = None
    ) -> torch.Tensor:
        """Differentiable generation: (B, t_max, V) row-stochastic distributions.

        Row 0 is a one-hot SOS; each later input is the previous output
        distribution's probability-weighted embedding average.
        """
        t_max = t_max or self.t_max
        batch = z.shape[0]
        memory = self.project_memory(z, f)
        sos = torch.zeros(batch, 1, self.vocab_size, dtype=memory.dtype, device=memory.device)
        sos[:, 0, SOS_ID] = 1.0
        dists = [sos]
        input_emb = self.embed(torch.full((batch, 1), SOS_ID, device=memory.device))
        for _ in range(t_max - 1):
            logits = self._decode(input_emb, memory)[:, -1]
            p = F.softmax(logits, dim=-1)
            dists.append(p.unsqueeze(1))
            input_emb = torch.cat([input_emb, (p @ self.embed.weight).unsqueeze(1)], dim=1)
        return torch.cat(dists, dim=1)


class _ConvFeatures(nn.Module):
    """Shared TextCNN shape: embed, concat condition, multi-kernel conv, max-pool."""

    def __init__(
        self,
        vocab_size: int,
        emb_dim: int = 64,
        cond_dim: int = CONDITION_DIM,
        kernel_sizes: tuple[int, ...] = (2, 3, 4, 5),
        channels: int = 64,
    ):
        super().__init__()
        self.cond_dim = cond_dim
        self.kernel_sizes = tuple(kernel_sizes)
        self.embed = nn.Embedding(vocab_size, emb_dim)
        self.convs = nn.ModuleList(
            nn.Conv1d(emb_dim + cond_dim, channels, k) for k in self.kernel_sizes
        )
        self.feature_dim = len(self.kernel_sizes) * channels

    def embed_tokens(self, s: torch.Tensor) -> torch.Tensor:
        """Hard ids (B, T) via lookup; soft distributions (B, T, V) via weighting."""
        if s.dtype == torch.long:
            return self.embed(s)
        if s.dim() != 3 or s.shape[-1] != self.embed.num_embeddings:
            raise ValueError(
                f"soft input must be (B, T, {self.embed.num_embeddings}), got {tuple(s.shape)}"
            )
        return s @ self.embed.weight

    def features(self, emb: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        if f.shape[-1] != self.cond_dim:
            raise ValueError(f"condition must have dim {self.cond_dim}, got {f.shape[-1]}")
        t = emb.shape[1]
        if t < max(self.kernel_sizes):
            raise ValueError(f"sequence length {t} shorter than kernel {max(self.kernel_sizes)}")
        x = torch.cat([emb, f.unsqueeze(1).expand(-1, t, -1)], dim=-1).transpose(1, 2)
        pooled = [F.relu(conv(x)).amax(dim=2) for conv in self.convs]
        return torch.cat(pooled, dim=1)


class CommentDiscriminator(_ConvFeatures):
    """WGAN critic: unbounded realness score, no output activation."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fc = nn.Linear(self.feature_dim, 1)

    def score_embedded(self, emb: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        return self.fc(self.features(emb, f)).squeeze(-1)

    def forward(self, s: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        return self.score_embedded(self.embed_tokens(s), f)


class SentimentClassifier(_ConvFeatures):
    """Auxiliary label head: log-probabilities over the two binary labels."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fc = nn.Linear(self.feature_dim, 2)

    def forward(self, s: torch.Tensor, f: torch.Tensor) -> torch.Tensor:
        logits = self.fc(self.features(self.embed_tokens(s), f))
        return F.log_softmax(logits, dim=-1)
