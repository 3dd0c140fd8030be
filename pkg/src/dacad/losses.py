"""Contrastive, adversarial and centre-based losses, and their weighted sum.

All functions take torch tensors and return a scalar tensor so gradients flow
back into whichever network produced the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

PROB_CLAMP = 1e-7
# -log(PROB_CLAMP): the largest value any clamped BCE term can take
_MAX_NLL = -math.log(PROB_CLAMP)


@dataclass
class LossWeights:
    alpha: float = 1.0  # supervised source contrastive
    beta: float = 1.0  # self-supervised target triplet
    gamma: float = 1.0  # domain discriminator
    lam: float = 1.0  # classifier
    margin: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lam"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")
        if not (math.isfinite(self.margin) and self.margin > 0):
            raise ValueError("margin must be > 0")


def _check_pair(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.dim() != 2 or b.dim() != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"{what}: embedding dimensions do not match ({tuple(a.shape)} vs {tuple(b.shape)})")


def sq_dist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).sum(-1)


def sup_mean_margin_loss(anchors, positives, negatives, margin: float = 1.0) -> torch.Tensor:
    """Hinge on the anchor-positive distance minus the *mean* anchor-negative distance.

    Every anchor is compared with all ``|N|`` negatives of the batch.
    """
    _check_pair(anchors, positives, "positives")
    _check_pair(anchors, negatives, "negatives")
    if anchors.shape[0] != positives.shape[0]:
        raise ValueError("anchors and positives must have the same batch size")
    if anchors.shape[0] == 0 or negatives.shape[0] == 0:
        raise ValueError("need at least one anchor and one negative")
    d_ap = sq_dist(anchors, positives)
    d_an = ((anchors[:, None, :] - negatives[None, :, :]) ** 2).sum(-1)
    inner = (d_ap[:, None] - d_an + margin).mean(1)
    return F.relu(inner).mean()


def self_triplet_loss(anchors, positives, negatives, margin: float = 1.0) -> torch.Tensor:
    _check_pair(anchors, positives, "positives")
    _check_pair(anchors, negatives, "negatives")
    if not anchors.shape[0] == positives.shape[0] == negatives.shape[0]:
        raise ValueError("triplet batches must have equal sizes")
    return F.relu(sq_dist(anchors, positives) - sq_dist(anchors, negatives) + margin).mean()


def discriminator_loss(src_probs, trg_probs) -> torch.Tensor:
    """BCE with source labelled 1 and target 0, averaged over both batches."""
    n = src_probs.numel() + trg_probs.numel()
    if n == 0:
        raise ValueError("discriminator loss needs at least one window")
    src = src_probs.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    trg = trg_probs.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    return -(torch.log(src).sum() + torch.log1p(-trg).sum()) / n


def cec_loss(embeddings, anomalous, centre) -> torch.Tensor:
    """Centre-based entropy loss.

    The squared distance to ``centre`` is read as an anomaly probability
    ``p = 1 - exp(-d2)`` and scored with BCE against ``anomalous`` (1 = anomaly).
    For normals ``-log(1 - p)`` is exactly ``d2``, so they are pulled onto the
    centre; anomalies are pushed out until ``p`` nears 1.
    """
    if embeddings.dim() != 2 or embeddings.shape[1] != centre.shape[-1]:
        raise ValueError("embedding dimension does not match centre")
    anomalous = torch.as_tensor(anomalous, dtype=embeddings.dtype)
    if anomalous.shape != embeddings.shape[:1]:
        raise ValueError("one label per embedding required")
    if not bool(((anomalous == 0) | (anomalous == 1)).all()):
        raise ValueError("classifier labels must be 0 (normal) or 1 (anomalous); unknown labels are not allowed")
    d2 = sq_dist(embeddings, centre)
    # clamp p to [PROB_CLAMP, 1 - PROB_CLAMP] in log space
    nll_normal = d2.clamp(max=_MAX_NLL)
    nll_anom = -torch.log((-torch.expm1(-d2)).clamp(PROB_CLAMP, 1 - PROB_CLAMP))
    return (anomalous * nll_anom + (1 - anomalous) * nll_normal).mean()


def deepsvdd_loss(embeddings, anomalous, centre) -> torch.Tensor:
    """Mean squared distance of normal samples to the centre; anomalies are ignored."""
    anomalous = torch.as_tensor(anomalous, dtype=torch.bool)
    normal = embeddings[~anomalous]
    if normal.shape[0] == 0:
        return embeddings.sum() * 0.0
    return sq_dist(normal, centre).mean()


def plain_bce_loss(logits, anomalous) -> torch.Tensor:
    anomalous = torch.as_tensor(anomalous, dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits.reshape(-1), anomalous)


def total_loss(l_sup, l_self, l_disc, l_cls, w: LossWeights):
    return w.alpha * l_sup + w.beta * l_self + w.gamma * l_disc + w.lam * l_cls
