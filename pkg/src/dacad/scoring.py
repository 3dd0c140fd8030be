"""Anomaly scores and the evaluation protocol without point adjustment.

F1 is computed from one confusion matrix summed over all series at a shared
threshold; AUPR and AUROC are computed per series and summarized by mean and
population standard deviation.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.stats import rankdata

from .core import ChannelStats, SeriesError, TimeSeries, Window, make_windows, standardize
from .model import DACAD, embed

log = logging.getLogger(__name__)

GRID_SIZE = 256


class MetricError(ValueError):
    pass


@dataclass
class ScoredSeries:
    entity_id: str
    scores: np.ndarray
    labels: Optional[np.ndarray] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.isfinite(self.scores).all():
            raise MetricError(f"{self.entity_id}: non-finite scores")
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(np.int64)
            if self.labels.shape != self.scores.shape:
                raise MetricError(f"{self.entity_id}: {self.labels.size} labels for {self.scores.size} scores")


@dataclass
class MetricReport:
    f1: float
    precision: float
    recall: float
    threshold: float
    aupr_mean: float
    aupr_std: float
    auroc_mean: float
    auroc_std: float
    entities: list[str] = field(default_factory=list)
    aupr: list[float] = field(default_factory=list)
    auroc: list[float] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls(**json.loads(Path(path).read_text()))


# -- scoring ------------------------------------------------------------------


@torch.no_grad()
def anomaly_score(model: DACAD, windows: Sequence[Window] | np.ndarray, batch_size: int = 2048) -> np.ndarray:
    """Squared distance of each window's embedding to the centre (higher = more anomalous).

    With the ``plain_bce`` head the predicted anomaly probability is returned instead.
    """
    emb = torch.from_numpy(embed(model, windows, batch_size))
    return model.score_embeddings(emb).double().numpy()


def windows_to_timesteps(window_scores: np.ndarray, length: int, ws: int, stride: int = 1) -> np.ndarray:
    """Each window's score lands on its last timestep; earlier and uncovered steps
    carry the most recent score forward, the head takes the first window's score."""
    window_scores = np.asarray(window_scores, dtype=np.float64)
    if length < ws:
        raise SeriesError(f"series shorter than window ({length} < {ws})")
    ends = np.arange(len(window_scores)) * stride + ws - 1
    out = np.full(length, np.nan)
    out[ends] = window_scores
    out[: ws - 1] = window_scores[0]
    # forward fill gaps left by stride > 1 and the tail
    idx = np.where(np.isnan(out), 0, np.arange(length))
    np.maximum.accumulate(idx, out=idx)
    return out[idx]


def score_series(
    model: DACAD,
    series: TimeSeries,
    ws: Optional[int] = None,
    stride: int = 1,
    stats: Optional[ChannelStats] = None,
) -> np.ndarray:
    """Per-timestep scores for a raw series, normalized with ``stats``
    (default: the model's target-domain statistics)."""
    ws = ws or model.cfg.window_size
    if series.length < ws:
        raise SeriesError(f"series shorter than window ({series.length} < {ws})")
    stats = stats or model.norm_stats.get("target")
    if stats is not None:
        series = standardize(series, stats)
    windows = make_windows(series, ws, stride)
    return windows_to_timesteps(anomaly_score(model, windows), series.length, ws, stride)


# -- metrics ------------------------------------------------------------------


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError("scores and labels must be vectors of equal length")
    return scores, labels


def auroc(scores, labels) -> float:
    """Mann-Whitney form: P(random positive outranks random negative), ties count half."""
    scores, labels = _binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("undefined metric: AUROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision over positives ranked by descending score (stable on ties)."""
    scores, labels = _binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("undefined metric: AUPR needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits == 1].sum() / n_pos)


def confusion(scores, labels, threshold: float) -> tuple[int, int, int]:
    """(TP, FP, FN) predicting positive where ``score >= threshold``."""
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return tp, fp, fn


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def threshold_grid(scores: np.ndarray, size: int = GRID_SIZE) -> np.ndarray:
    return np.unique(np.quantile(scores, np.linspace(0.0, 1.0, size), method="higher"))


def best_f1_aggregated(scored: Sequence[ScoredSeries], grid_size: int = GRID_SIZE):
    """Shared-threshold sweep maximizing F1 of the summed confusion matrix.

    Returns ``(threshold, f1, precision, recall)``; ties go to the lowest threshold.
    """
    if not scored:
        raise MetricError("no series to evaluate")
    if any(s.labels is None for s in scored):
        raise MetricError("every series must be labelled")
    if sum(int(s.labels.sum()) for s in scored) == 0:
        raise MetricError("no positives in any series")
    pooled = np.concatenate([s.scores for s in scored])
    best = None
    for thr in threshold_grid(pooled, grid_size):
        counts = np.sum([confusion(s.scores, s.labels, thr) for s in scored], axis=0)
        f1, p, r = f1_from_counts(*counts)
        if best is None or f1 > best[1]:
            best = (float(thr), f1, p, r)
    return best


def dataset_report(scored: Sequence[ScoredSeries]) -> MetricReport:
    entities, auprs, aurocs, skipped = [], [], [], []
    for s in scored:
        if s.labels is None:
            raise MetricError(f"{s.entity_id}: missing labels")
        try:
            a_roc, a_pr = auroc(s.scores, s.labels), aupr(s.scores, s.labels)
        except MetricError:
            log.warning("skipping single-class entity %s", s.entity_id)
            skipped.append(s.entity_id)
            continue
        entities.append(s.entity_id)
        aurocs.append(a_roc)
        auprs.append(a_pr)
    if not entities:
        raise MetricError("no entity has both classes")
    thr, f1, p, r = best_f1_aggregated(scored)
    return MetricReport(
        f1=f1,
        precision=p,
        recall=r,
        threshold=thr,
        aupr_mean=float(np.mean(auprs)),
        aupr_std=float(np.std(auprs)),
        auroc_mean=float(np.mean(aurocs)),
        auroc_std=float(np.std(aurocs)),
        entities=entities,
        aupr=auprs,
        auroc=aurocs,
        skipped=skipped,
    )


def export_embeddings(model: DACAD, windows: Sequence[Window], path: str | Path) -> Path:
    """CSV of classifier-space embeddings with entity, start, label and provenance columns."""
    emb = embed(model, windows)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "start", "label", "provenance"] + [f"e{i}" for i in range(emb.shape[1])])
        for w, row in zip(windows, emb):
            writer.writerow([w.entity_id, w.start, w.label.value, w.provenance] + [repr(float(v)) for v in row])
    return path
