"""Triplet construction for the source (supervised) and target (self-supervised) losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Window, WindowLabel
from .injection import inject_random


class SamplingError(ValueError):
    pass


@dataclass
class Triplet:
    anchor: Window
    positive: Window
    negative: Window
    domain: str  # "source" | "target"


def _seeds(rng, n):
    return rng.integers(0, 2**63, size=n)


def build_source_triplets(
    s_norm: Sequence[Window],
    s_anom: Sequence[Window],
    batch: int,
    p_real_neg: float = 0.5,
    seed: int = 0,
    injection: bool = True,
) -> list[Triplet]:
    """Anchor and positive are distinct normal windows; the negative is a real anomaly
    with probability ``p_real_neg`` and otherwise an injected copy of the anchor.

    With ``injection=False`` every negative is a real anomaly.
    """
    if len(s_norm) < 2:
        raise SamplingError("cannot form positive pair: need at least 2 normal windows")
    if batch < 1 or not 0.0 <= p_real_neg <= 1.0:
        raise SamplingError("batch must be >= 1 and p_real_neg in [0, 1]")
    if not injection and not s_anom:
        raise SamplingError("injection disabled and no real anomalies to use as negatives")
    rng = np.random.default_rng(seed)
    anchors = rng.integers(len(s_norm), size=batch)
    # draw from n-1 slots and skip the anchor's own index
    positives = rng.integers(len(s_norm) - 1, size=batch)
    positives = positives + (positives >= anchors)
    use_real = rng.random(batch) < p_real_neg
    real_idx = rng.integers(max(len(s_anom), 1), size=batch)
    inj_seeds = _seeds(rng, batch)

    out = []
    for i in range(batch):
        anchor = s_norm[anchors[i]]
        if s_anom and (use_real[i] or not injection):
            negative = s_anom[real_idx[i]]
        else:
            negative = inject_random(anchor, int(inj_seeds[i]))
        out.append(Triplet(anchor, s_norm[positives[i]], negative, "source"))
    return out


def build_target_triplets(
    t_windows: Sequence[Window],
    k_proximity: int = 5,
    batch: int = 64,
    seed: int = 0,
    far_negative_gap: Optional[int] = None,
) -> list[Triplet]:
    """Positive is a window starting within ``k_proximity`` steps of the anchor; negative
    is the injected anchor.

    ``far_negative_gap`` replaces injection with an original window whose start is
    at least that many steps from the anchor.
    """
    if len(t_windows) < 2:
        raise SamplingError("need at least 2 target windows")
    if k_proximity < 1 or batch < 1:
        raise SamplingError("k_proximity and batch must be >= 1")
    starts = np.fromiter((w.start for w in t_windows), dtype=np.int64, count=len(t_windows))
    if np.any(np.diff(starts) < 0):
        raise SamplingError("target windows must be ordered by start index")

    # neighbour range [lo, hi) per window, excluding windows sharing its start
    lo = np.searchsorted(starts, starts - k_proximity, side="left")
    hi = np.searchsorted(starts, starts + k_proximity, side="right")
    same = np.searchsorted(starts, starts, side="right") - np.searchsorted(starts, starts, side="left")
    ok = hi - lo - same > 0
    if far_negative_gap is not None:
        # windows [0, left) and [right, n) start at least far_negative_gap away
        left = np.searchsorted(starts, starts - far_negative_gap, side="right")
        right = np.searchsorted(starts, starts + far_negative_gap, side="left")
        ok &= left + len(starts) - right > 0
    valid = np.flatnonzero(ok)
    if valid.size == 0:
        raise SamplingError(f"no target window has a neighbour within {k_proximity} steps")

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(batch):
        i = int(valid[rng.integers(valid.size)])
        cands = [j for j in range(lo[i], hi[i]) if starts[j] != starts[i]]
        anchor = t_windows[i]
        positive = t_windows[cands[int(rng.integers(len(cands)))]]
        if far_negative_gap is None:
            negative = inject_random(anchor, int(rng.integers(2**63)))
        else:
            j = int(rng.integers(left[i] + len(starts) - right[i]))
            negative = t_windows[j if j < left[i] else right[i] + (j - left[i])]
        out.append(Triplet(anchor, positive, negative, "target"))
    return out


def split_source(windows: Sequence[Window]) -> tuple[list[Window], list[Window]]:
    """Partition labelled windows into (normal, anomalous)."""
    if any(w.label == WindowLabel.UNKNOWN for w in windows):
        raise SamplingError("source windows must be labelled")
    normal = [w for w in windows if w.label == WindowLabel.NORMAL]
    anomalous = [w for w in windows if w.label == WindowLabel.ANOMALOUS]
    return normal, anomalous
