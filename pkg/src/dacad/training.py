"""Joint training of encoder, classifier head and discriminator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .core import TimeSeries, Window, make_windows, standardize
from .ingestion import compute_channel_stats
from .losses import (
    LossWeights,
    cec_loss,
    deepsvdd_loss,
    discriminator_loss,
    plain_bce_loss,
    self_triplet_loss,
    sup_mean_margin_loss,
    total_loss,
)
from .injection import inject_random
from .model import DACAD, ModelConfig, init_centre, to_tensor
from .sampling import Triplet, build_source_triplets, build_target_triplets, split_source

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    window_size: int = 100
    stride: int = 1
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    k_proximity: int = 5
    p_real_neg: float = 0.5
    seed: int = 0
    channels: list[int] = field(default_factory=lambda: [128, 256, 512])
    kernel_size: int = 3
    dilations: list[int] = field(default_factory=lambda: [1, 2, 4])
    repr_dim: int = 1024
    head_hidden: int = 512
    head_dim: int = 128
    disc_hidden: int = 256
    head: str = "cec"
    grl_scale: float = 1.0
    injection: bool = True
    centre_batch: int = 256
    anomaly_fraction: float = 0.25
    steps_per_epoch: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        for name in ("window_size", "stride", "epochs", "batch_size", "k_proximity", "centre_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    def model_config(self, input_dims: int) -> ModelConfig:
        return ModelConfig(
            input_dims=input_dims,
            window_size=self.window_size,
            channels=self.channels,
            kernel_size=self.kernel_size,
            dilations=self.dilations,
            repr_dim=self.repr_dim,
            head_hidden=self.head_hidden,
            head_dim=self.head_dim,
            disc_hidden=self.disc_hidden,
            head=self.head,
            grl_scale=self.grl_scale,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class LossBreakdown:
    step: int
    l_sup: float
    l_self: float
    l_disc: float
    l_cls: float
    l_total: float


@dataclass
class StepBatch:
    source_triplets: Sequence[Triplet]
    target_triplets: Sequence[Triplet]
    source_windows: Sequence[Window]
    source_anomalous: np.ndarray
    target_windows: Sequence[Window]


def _classifier_loss(model: DACAD, emb, anomalous):
    if model.cfg.head == "cec":
        return cec_loss(emb, anomalous, model.centre)
    if model.cfg.head == "deepsvdd":
        return deepsvdd_loss(emb, anomalous, model.centre)
    return plain_bce_loss(emb, anomalous)


def compute_losses(model: DACAD, batch: StepBatch, w: LossWeights) -> dict[str, torch.Tensor]:
    """All four loss terms from a single encoder pass over the step's windows."""
    groups = [
        [t.anchor for t in batch.source_triplets],
        [t.positive for t in batch.source_triplets],
        [t.negative for t in batch.source_triplets],
        [t.anchor for t in batch.target_triplets],
        [t.positive for t in batch.target_triplets],
        [t.negative for t in batch.target_triplets],
        list(batch.source_windows),
        list(batch.target_windows),
    ]
    sizes = [len(g) for g in groups]
    reprs = model.encode(to_tensor([w_ for g in groups for w_ in g]))
    sa, sp, sn, ta, tp, tn, sb, tb = torch.split(reprs, sizes)

    l_sup = sup_mean_margin_loss(sa, sp, sn, w.margin)
    l_self = self_triplet_loss(ta, tp, tn, w.margin)
    l_disc = discriminator_loss(model.discriminate(sb), model.discriminate(tb))
    anomalous = torch.as_tensor(batch.source_anomalous, dtype=torch.float32)
    l_cls = _classifier_loss(model, model.classify(sb), anomalous)
    return {"l_sup": l_sup, "l_self": l_self, "l_disc": l_disc, "l_cls": l_cls}


def train_step(model: DACAD, optimizer, batch: StepBatch, w: LossWeights, step: int = 0) -> LossBreakdown:
    terms = compute_losses(model, batch, w)
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite loss term {name} = {value.item()} at step {step}")
    total = total_loss(terms["l_sup"], terms["l_self"], terms["l_disc"], terms["l_cls"], w)
    optimizer.zero_grad(set_to_none=False)
    total.backward()
    optimizer.step()
    parts = [float(terms[k].detach()) for k in ("l_sup", "l_self", "l_disc", "l_cls")]
    return LossBreakdown(step, *parts, total_loss(*parts, w))


def _prepare(series: TimeSeries, cfg: TrainConfig):
    stats = compute_channel_stats([series])
    return stats, make_windows(standardize(series, stats), cfg.window_size, cfg.stride)


def _source_batch(rng, s_norm, s_anom, cfg: TrainConfig):
    """Labelled source windows for the classifier and discriminator.

    ``anomaly_fraction`` of the batch is anomalous. When injection is enabled each
    anomalous slot holds a real anomaly with probability ``p_real_neg`` and an
    injected normal window otherwise.
    """
    b = cfg.batch_size
    has_anom = bool(s_anom) or cfg.injection
    n_anom = min(b, math.ceil(cfg.anomaly_fraction * b)) if has_anom else 0
    norm_idx = rng.integers(len(s_norm), size=b - n_anom)
    windows = [s_norm[i] for i in norm_idx]
    for _ in range(n_anom):
        real = bool(s_anom) and (not cfg.injection or rng.random() < cfg.p_real_neg)
        if real:
            windows.append(s_anom[int(rng.integers(len(s_anom)))])
        else:
            base = s_norm[int(rng.integers(len(s_norm)))]
            windows.append(inject_random(base, int(rng.integers(2**63))))
    labels = np.r_[np.zeros(b - n_anom), np.ones(n_anom)].astype(np.float32)
    return windows, labels


def build_model(source: TimeSeries, target: TimeSeries, cfg: TrainConfig):
    """Normalize both domains, window them and initialize the model and centre."""
    if source.labels is None:
        raise TrainingError(f"source series {source.entity_id!r} has no labels")
    if source.dims != target.dims:
        raise TrainingError(f"source has {source.dims} channels, target has {target.dims}")
    s_stats, s_windows = _prepare(source, cfg)
    t_stats, t_windows = _prepare(target, cfg)
    s_norm, s_anom = split_source(s_windows)
    if len(s_norm) < 2:
        raise TrainingError("source has fewer than 2 normal windows; cannot form triplets or centre")

    model = DACAD(cfg.model_config(source.dims))
    model.norm_stats = {"source": s_stats, "target": t_stats}
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    pick = rng.choice(len(s_norm), size=min(cfg.centre_batch, len(s_norm)), replace=False)
    init_centre(model, [s_norm[i] for i in np.sort(pick)])
    return model, s_norm, s_anom, t_windows


def train(
    source: TimeSeries,
    target: TimeSeries,
    cfg: TrainConfig,
    log_path: Optional[str | Path] = None,
) -> tuple[DACAD, list[LossBreakdown]]:
    """Train on a labelled source series and an unlabelled target series.

    Target labels, if present, are ignored. Triplets and batches for each step
    are drawn from seeds derived from ``(cfg.seed, epoch, step)``, so a run is
    reproducible and each epoch sees fresh injected negatives.
    """
    model, s_norm, s_anom, t_windows = build_model(source, target, cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    steps = cfg.steps_per_epoch or math.ceil((len(s_norm) + len(s_anom)) / cfg.batch_size)
    far_gap = None if cfg.injection else 10 * cfg.window_size
    history: list[LossBreakdown] = []
    model.train()
    step = 0
    for epoch in range(cfg.epochs):
        for i in range(steps):
            ss = np.random.SeedSequence([cfg.seed, 2, epoch, i])
            s_seed, t_seed, b_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
            src_windows, src_labels = _source_batch(np.random.default_rng(b_seed), s_norm, s_anom, cfg)
            trg_rng = np.random.default_rng(b_seed + 1)
            batch = StepBatch(
                build_source_triplets(s_norm, s_anom, cfg.batch_size, cfg.p_real_neg, s_seed, cfg.injection),
                build_target_triplets(t_windows, cfg.k_proximity, cfg.batch_size, t_seed, far_gap),
                src_windows,
                src_labels,
                [t_windows[j] for j in trg_rng.integers(len(t_windows), size=cfg.batch_size)],
            )
            history.append(train_step(model, optimizer, batch, cfg.weights, step))
            step += 1
        last = history[-1]
        log.info("epoch %d/%d total=%.4f sup=%.4f self=%.4f disc=%.4f cls=%.4f", epoch + 1, cfg.epochs,
                 last.l_total, last.l_sup, last.l_self, last.l_disc, last.l_cls)
    model.eval()
    if log_path is not None:
        write_training_log(history, log_path)
    return model, history


def write_training_log(history: Sequence[LossBreakdown], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_sup", "l_self", "l_disc", "l_cls", "l_total"])
        for row in history:
            writer.writerow([row.step, repr(row.l_sup), repr(row.l_self), repr(row.l_disc),
                             repr(row.l_cls), repr(row.l_total)])
    return path
