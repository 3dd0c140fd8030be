"""Synthetic two-domain benchmark and brute-force metric oracles.

A domain is a sum of sinusoids per channel plus Gaussian noise. Anomalous events
are written into the series with the injection primitives, and labels mark each
event's full extent. Source and target can use disjoint anomaly classes, which
is the situation domain adaptation has to cope with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import TimeSeries
from .ingestion import DatasetBundle, EntityPair
from .injection import (
    ANOMALY_TYPES,
    DEFAULT_MAGNITUDE,
    SEASONAL_FACTORS,
    apply_contextual,
    apply_global,
    apply_seasonal,
    apply_shapelet,
    apply_trend,
)

SPLIT_INDEX = {"train": 0, "test": 1}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    entity_id: str = "source"
    length: int = 20_000
    dims: int = 5
    amplitude: float = 1.0
    frequency_scale: float = 1.0
    period_range: tuple[float, float] = (8.0, 24.0)  # a 32-step window spans at least one cycle
    noise: float = 0.1
    anomaly_types: tuple[str, ...] = ("global", "trend")
    anomaly_rate: float = 0.08
    event_length: tuple[int, int] = (24, 64)
    min_gap: int = 64
    channel_fraction: float = 0.4
    base_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.anomaly_rate <= 0.3:
            raise SynthError(f"anomaly rate must lie in (0, 0.3], got {self.anomaly_rate}")
        unknown = set(self.anomaly_types) - set(ANOMALY_TYPES)
        if unknown or not self.anomaly_types:
            raise SynthError(f"invalid anomaly types {sorted(unknown) or '(none)'}")
        lo, hi = self.event_length
        if not 2 <= lo <= hi:
            raise SynthError("event_length must be an ordered range with minimum >= 2")


def default_specs(seed: int = 0) -> tuple[SynthSpec, SynthSpec]:
    """Desk-scale source/target pair: point and trend anomalies in the source,
    seasonal and shapelet anomalies in a rescaled, noisier target.

    Target events touch every channel. Shape anomalies on a subset of channels
    of a noisier series are close to invisible at window length 32, and the
    benchmark is meant to test transfer, not detection at the noise floor.
    """
    source = SynthSpec("source", anomaly_types=("global", "trend"), base_seed=seed, seed=seed)
    target = SynthSpec(
        "target",
        amplitude=1.5,
        noise=0.25,
        anomaly_types=("seasonal", "shapelet"),
        channel_fraction=1.0,
        base_seed=seed,
        seed=seed + 7919,
    )
    return source, target


def base_signal(spec: SynthSpec, split: str = "train") -> np.ndarray:
    """Normal (L, D) signal. Frequencies and phases depend only on ``base_seed``."""
    shape_rng = np.random.default_rng(np.random.SeedSequence([spec.base_seed, 0]))
    periods = shape_rng.uniform(*spec.period_range, size=(2, spec.dims))
    weights = shape_rng.uniform(0.5, 1.5, size=(2, spec.dims))
    phases = shape_rng.uniform(0, 2 * np.pi, size=(2, spec.dims))
    noise_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, SPLIT_INDEX[split], 1]))
    t = np.arange(spec.length)[:, None]
    clean = sum(
        weights[k] * np.sin(2 * np.pi * spec.frequency_scale * t / periods[k] + phases[k]) for k in range(2)
    )
    return spec.amplitude * (clean + spec.noise * noise_rng.standard_normal((spec.length, spec.dims)))


def _events(rng, spec: SynthSpec) -> list[tuple[int, int]]:
    """Non-overlapping [start, end) events covering ``anomaly_rate * length`` steps."""
    target = int(round(spec.anomaly_rate * spec.length))
    lengths = []
    while sum(lengths) < target:
        lengths.append(int(rng.integers(spec.event_length[0], spec.event_length[1] + 1)))
    lengths[-1] -= sum(lengths) - target
    if lengths[-1] < 2:
        lengths[-2] += lengths.pop()
    n = len(lengths)
    slack = spec.length - target - (n + 1) * spec.min_gap
    if slack < 0:
        raise SynthError("series too short for the requested anomaly rate and gaps")
    # random split of the slack over n + 1 gaps
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    gaps = np.diff(np.r_[0, cuts, slack]) + spec.min_gap
    events, pos = [], 0
    for i, length in enumerate(lengths):
        pos += int(gaps[i])
        events.append((pos, pos + length))
        pos += length
    return events


def _write_event(x: np.ndarray, a: int, b: int, kind: str, rng, sigma: float) -> np.ndarray:
    """Apply one anomaly of type ``kind`` to channel ``x`` over [a, b)."""
    n = b - a
    if kind in ("global", "contextual"):
        # outliers on both event bounds plus a few interior points
        inner = rng.choice(np.arange(a + 1, b - 1), size=min(max(n // 6, 1), n - 2), replace=False) if n > 2 else []
        points = np.unique(np.r_[a, b - 1, inner]).astype(int)
        k = float(rng.uniform(*DEFAULT_MAGNITUDE[kind]))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        if kind == "global":
            # stats from the whole channel so the outliers sit outside the global envelope
            out = x.copy()
            out[points] = apply_global(x, points, k, sign)[points]
            return out
        return apply_contextual(x, points, k, sign)
    if kind == "trend":
        beta = float(rng.uniform(*DEFAULT_MAGNITUDE["trend"]))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        seg = apply_trend(x[a:b], 0, sign * 2 * beta * sigma / n)
    elif kind == "seasonal":
        seg = apply_seasonal(x[a:b], 0, n, float(rng.choice(SEASONAL_FACTORS)))
    else:
        seg = apply_shapelet(x[a:b], 0, n, rng.uniform(-0.1 * sigma, 0.1 * sigma, size=n))
    out = x.copy()
    out[a:b] = seg
    return out


def generate_domain(spec: SynthSpec, split: str = "train") -> TimeSeries:
    values = base_signal(spec, split)
    labels = np.zeros(spec.length, dtype=np.int8)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, SPLIT_INDEX[split], 2]))
    sigma = np.maximum(values.std(axis=0), 1e-4)
    n_channels = math.ceil(spec.channel_fraction * spec.dims)
    for a, b in _events(rng, spec):
        kind = spec.anomaly_types[int(rng.integers(len(spec.anomaly_types)))]
        for d in rng.choice(spec.dims, size=n_channels, replace=False):
            values[:, d] = _write_event(values[:, d], a, b, kind, rng, float(sigma[d]))
        labels[a:b] = 1
    return TimeSeries(spec.entity_id, values, labels, split)


def make_benchmark(source: SynthSpec, target: SynthSpec, name: str = "synthetic") -> DatasetBundle:
    """Bundle with one entity per domain, each with labelled train and test splits."""
    entities = [
        EntityPair(spec.entity_id, generate_domain(spec, "train"), generate_domain(spec, "test"))
        for spec in (source, target)
    ]
    return DatasetBundle(name, entities)


def event_bounds(labels: np.ndarray) -> list[tuple[int, int]]:
    """[start, end) runs of ones in a 0/1 vector."""
    padded = np.r_[0, np.asarray(labels, dtype=np.int8), 0]
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


# -- oracles ------------------------------------------------------------------


def _oracle_inputs(scores, labels):
    scores = [float(s) for s in scores]
    labels = [int(v) for v in labels]
    if len(scores) != len(labels):
        raise SynthError("scores and labels differ in length")
    return scores, labels


def oracle_auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Explicit enumeration of positive/negative pairs; ties earn half credit."""
    scores, labels = _oracle_inputs(scores, labels)
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        raise SynthError("undefined metric: need both classes")
    credit = 0.0
    for p in pos:
        for n in neg:
            credit += 1.0 if p > n else 0.5 if p == n else 0.0
    return credit / (len(pos) * len(neg))


def oracle_aupr(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Average precision by walking the ranking; equal scores keep input order."""
    scores, labels = _oracle_inputs(scores, labels)
    n_pos = sum(labels)
    if n_pos == 0:
        raise SynthError("undefined metric: need at least one positive")
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    total, seen = 0.0, 0
    for rank, i in enumerate(ranked, start=1):
        if labels[i] == 1:
            seen += 1
            total += seen / rank
    return total / n_pos


def oracle_best_f1(series: Sequence[tuple[Sequence[float], Sequence[int]]]) -> float:
    """Best F1 of the summed confusion matrix over every distinct pooled score."""
    pooled = sorted({float(s) for scores, _ in series for s in scores})
    best = 0.0
    for thr in pooled:
        tp = fp = fn = 0
        for scores, labels in series:
            for s, y in zip(scores, labels):
                if s >= thr:
                    tp += y == 1
                    fp += y == 0
                else:
                    fn += y == 1
        if tp:
            p, r = tp / (tp + fp), tp / (tp + fn)
            best = max(best, 2 * p * r / (p + r))
    return best


def with_seed(spec: SynthSpec, seed: int) -> SynthSpec:
    return replace(spec, seed=seed)
