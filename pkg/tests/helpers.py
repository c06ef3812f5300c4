"""Shared fixtures: tiny vocabularies, toy records, finite-difference checks."""

from __future__ import annotations

import torch

from sarcgen.corpus import (
    CommentRecord,
    Hierarchy,
    Label,
    Topic,
    Vocab,
    build_vocab,
)

ALPHABET = "天气真好哈呵票值电影戏剧音乐人生如梦不错很棒"


def tiny_vocab(chars: str = ALPHABET) -> Vocab:
    rec = CommentRecord(
        id="v", text=chars, label=Label.SARCASTIC, topic=Topic.LIFESTYLE,
        hierarchy=Hierarchy.TOP_LEVEL,
    )
    return build_vocab([rec], min_freq=1)


def toy_records(n: int, seed: int = 0) -> list[CommentRecord]:
    import random

    rng = random.Random(seed)
    topics = list(Topic)
    out = []
    for i in range(n):
        text = "".join(rng.choices(ALPHABET, k=rng.randint(4, 12)))
        out.append(
            CommentRecord(
                id=f"t{i}",
                text=text,
                label=rng.choice([Label.SARCASTIC, Label.NON_SARCASTIC]),
                topic=rng.choice(topics),
                hierarchy=rng.choice(list(Hierarchy)),
            )
        )
    return out


def finite_difference_grads(loss_fn, params: list[torch.Tensor], eps: float = 1e-5):
    """Central-difference gradients of loss_fn() w.r.t. each parameter tensor."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = loss_fn().item()
                flat[i] = orig - eps
                lo = loss_fn().item()
                flat[i] = orig
                g.view(-1)[i] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads


def assert_grads_match(loss_fn, params: list[torch.Tensor], rtol: float = 1e-3, eps: float = 1e-5):
    """Autograd vs central differences, elementwise |a-f| <= rtol*max(|a|,|f|) + atol."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    numeric = finite_difference_grads(loss_fn, params, eps=eps)
    for a, f in zip(analytic, numeric):
        assert torch.allclose(a, f, rtol=rtol, atol=1e-6), (
            f"gradient mismatch: max abs diff {(a - f).abs().max().item():.3e}"
        )
