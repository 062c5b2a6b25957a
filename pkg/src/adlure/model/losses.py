"""Compound training objective: focal reconstruction term plus latent KL term.

Edge presence is a heavily imbalanced binary problem, so the
reconstruction term is the sigmoid focal loss: per compared entry,
``-alpha_t * (1 - p_t)^gamma * log(p_t)`` with ``p_t = p`` for a real edge
and ``1 - p`` otherwise (``alpha_t`` switches the same way). Only masked,
strictly lower-triangular entries are compared, since the target adjacency
is lower triangular under the topological ordering.

The latent term is the closed-form KL divergence between the per-node
diagonal Gaussian and the standard Normal prior, averaged over real
nodes. The total per-graph loss weights the focal mean by ``n^2 / 2``
(half the entries are estimated) and the KL mean by the latent width.
"""

from __future__ import annotations

import torch
from torch import Tensor

EPSILON = 1e-7


def _batched(t: Tensor, ndim: int) -> tuple[Tensor, bool]:
    if t.dim() == ndim - 1:
        return t.unsqueeze(0), True
    if t.dim() == ndim:
        return t, False
    raise ValueError(f"expected a {ndim - 1}- or {ndim}-dimensional tensor, got {t.dim()}")


def pair_mask(mask: Tensor) -> Tensor:
    """Mask of compared entries: real source, real target, strictly lower."""
    m, _ = _batched(mask, 2)
    outer = m.unsqueeze(2) * m.unsqueeze(1)
    lower = torch.tril(torch.ones_like(outer), diagonal=-1)
    out = outer * lower
    return out if mask.dim() == 2 else out.squeeze(0)


def focal_loss(
    targets: Tensor,
    scores: Tensor,
    mask: Tensor,
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> Tensor:
    """Mean focal term over the masked strictly-lower-triangular entries.

    Accepts one graph ((n, n) matrices, (n,) mask) or a batch with a
    leading dimension; returns a scalar or per-graph vector accordingly.
    """
    t, squeezed = _batched(targets, 3)
    s, _ = _batched(scores, 3)
    m, _ = _batched(mask, 2)
    if t.shape != s.shape:
        raise ValueError(f"targets {tuple(t.shape)} and scores {tuple(s.shape)} differ")

    pm = pair_mask(m)
    p = s.clamp(EPSILON, 1.0 - EPSILON)
    positive = t > 0.5
    p_t = torch.where(positive, p, 1.0 - p)
    alpha_t = torch.where(positive, torch.full_like(p, alpha), torch.full_like(p, 1.0 - alpha))
    terms = -alpha_t * (1.0 - p_t) ** gamma * torch.log(p_t)
    per_graph = (terms * pm).sum(dim=(-2, -1)) / pm.sum(dim=(-2, -1)).clamp(min=1.0)
    return per_graph.squeeze(0) if squeezed else per_graph


def kl_divergence(mu: Tensor, sigma: Tensor, mask: Tensor) -> Tensor:
    """Mean per-node KL(N(mu, sigma^2) || N(0, 1)), real nodes only."""
    mu_b, squeezed = _batched(mu, 3)
    sigma_b, _ = _batched(sigma, 3)
    m, _ = _batched(mask, 2)
    real = m > 0.5
    if (sigma_b[real] <= 0).any():
        raise ValueError("sigma must be strictly positive on real rows")
    safe_sigma = torch.where(real.unsqueeze(-1), sigma_b, torch.ones_like(sigma_b))
    per_node = 0.5 * (mu_b**2 + safe_sigma**2 - 1.0 - torch.log(safe_sigma**2)).sum(dim=-1)
    per_graph = (per_node * m).sum(dim=-1) / m.sum(dim=-1).clamp(min=1.0)
    return per_graph.squeeze(0) if squeezed else per_graph


def total_loss(
    focal: Tensor,
    kl: Tensor,
    n_real: Tensor,
    latent_dim: int,
) -> Tensor:
    """Per-graph compound loss: (n^2 / 2) * focal + latent_dim * kl."""
    return (n_real.to(focal.dtype) ** 2 / 2.0) * focal + float(latent_dim) * kl
