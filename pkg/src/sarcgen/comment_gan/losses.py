"""Loss functions for the comment GAN: pretrain NLL, WGAN-GP critic, label head.

The critic minimizes E_fake[D] - E_real[D] + lambda * GP (the standard
Wasserstein-with-gradient-penalty objective); the generator minimizes
alpha * (-E_fake[D]) + (1 - alpha) * fake-label NLL.
"""

from __future__ import annotations

from typing import Callable

import torch

from ..corpus import PAD_ID
from ..errors import TrainingDiverged


def sequence_nll(log_probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-sequence summed NLL averaged over the batch; PAD targets contribute zero.

    log_probs: (B, T, V) log-distributions; targets: (B, T) token ids aligned
    with them (the sequence shifted left by one under teacher forcing).
    """
    valid = targets != PAD_ID
    if not bool(valid.any()):
        raise ValueError("no valid tokens")
    token_nll = -log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return (token_nll * valid).sum() / targets.shape[0]


def pretrain_loss(
    generator, ids: torch.Tensor, z: torch.Tensor, f: torch.Tensor
) -> torch.Tensor:
    """Teacher-forced NLL of real sequences under the generator."""
    return sequence_nll(generator.log_probs(ids, z, f), ids[:, 1:])


def gradient_penalty(
    score_fn: Callable[[torch.Tensor], torch.Tensor],
    real_emb: torch.Tensor,
    fake_emb: torch.Tensor,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """mean((||grad_xhat score(xhat)||_2 - 1)^2) on per-sample interpolants.

    Interpolation happens in embedding space; eps is drawn uniform(0,1) per
    sample unless supplied explicitly.
    """
    if real_emb.shape != fake_emb.shape:
        raise ValueError(f"shape mismatch: {tuple(real_emb.shape)} vs {tuple(fake_emb.shape)}")
    batch = real_emb.shape[0]
    if eps is None:
        eps = torch.rand(batch, generator=generator, dtype=real_emb.dtype)
    eps = eps.view(batch, *([1] * (real_emb.dim() - 1)))
    x_hat = (eps * real_emb + (1.0 - eps) * fake_emb).detach().requires_grad_(True)
    scores = score_fn(x_hat)
    grads = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def discriminator_loss(
    discriminator,
    real_ids: torch.Tensor,
    fake_soft: torch.Tensor,
    f: torch.Tensor,
    lambda_gp: float,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Critic objective E_fake[D] - E_real[D] + lambda * GP, plus its parts."""
    real_emb = discriminator.embed_tokens(real_ids)
    fake_emb = discriminator.embed_tokens(fake_soft.detach())
    score_real = discriminator.score_embedded(real_emb, f)
    score_fake = discriminator.score_embedded(fake_emb, f)
    if lambda_gp != 0.0:
        gp = gradient_penalty(
            lambda x: discriminator.score_embedded(x, f),
            real_emb.detach(),
            fake_emb.detach(),
            eps=eps,
            generator=generator,
        )
    else:
        gp = torch.zeros((), dtype=score_real.dtype)
    loss = score_fake.mean() - score_real.mean() + lambda_gp * gp
    if not torch.isfinite(loss):
        raise TrainingDiverged("discriminator diverged")
    return loss, {
        "score_real": score_real.mean().item(),
        "score_fake": score_fake.mean().item(),
        "gp": gp.item(),
    }


def classifier_loss(
    classifier,
    real_ids: torch.Tensor,
    real_f: torch.Tensor,
    real_labels: torch.Tensor,
    fake_soft: torch.Tensor,
    fake_f: torch.Tensor,
    fake_labels: torch.Tensor,
) -> torch.Tensor:
    """Half the real-batch label NLL plus half the fake-batch label NLL."""
    real_term = label_nll(classifier(real_ids, real_f), real_labels)
    fake_term = label_nll(classifier(fake_soft, fake_f), fake_labels)
    return 0.5 * (real_term + fake_term)


def label_nll(log_probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return -log_probs.gather(-1, labels.unsqueeze(-1)).mean()


def generator_loss(adv_term: torch.Tensor, cls_term: torch.Tensor, alpha: float) -> torch.Tensor:
    """alpha-weighted mix of adversarial and label-consistency terms."""
    return alpha * adv_term + (1.0 - alpha) * cls_term
