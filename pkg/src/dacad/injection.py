"""Synthetic anomaly injection for negative augmentation.

Each anomaly type has a pure ``apply_*`` primitive acting on one channel with
explicit parameters, and :func:`inject` draws those parameters from a seeded
generator. Channels not selected (and, for segment types, timesteps outside the
segment) are never touched.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import Window

ANOMALY_TYPES = ("global", "contextual", "seasonal", "trend", "shapelet")
SEGMENT_TYPES = ("seasonal", "shapelet")
POINT_TYPES = ("global", "contextual", "trend")

MIN_WINDOW = 8
MIN_SEGMENT_WINDOW = 16
CONTEXT_SIZE = 16
SIGMA_FLOOR = 1e-4
MAX_ATTEMPTS = 10

# magnitude ranges: k for global/contextual, beta for trend
DEFAULT_MAGNITUDE = {
    "global": (3.0, 6.0),
    "contextual": (1.5, 3.0),
    "trend": (1.0, 3.0),
}
DEFAULT_SEGMENT_FRACTION = {"seasonal": 0.5, "shapelet": 0.3}
SEASONAL_FACTORS = (0.5, 2.0)


class InjectionError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionSpec:
    type: str
    seed: int = 0
    channel_fraction: float = 0.3
    segment_fraction: Optional[float] = None
    magnitude: Optional[tuple[float, float]] = None
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        if self.type not in ANOMALY_TYPES:
            raise InjectionError(f"unknown anomaly type {self.type!r}")
        if not 0.0 < self.channel_fraction <= 1.0:
            raise InjectionError("channel_fraction must lie in (0, 1]; zero channels selected")
        if self.segment_fraction is not None and not 0.0 < self.segment_fraction <= 1.0:
            raise InjectionError("segment_fraction must lie in (0, 1]")
        if self.magnitude is not None:
            lo, hi = self.magnitude
            if not 0 <= lo <= hi:
                raise InjectionError("magnitude must be an ordered non-negative range")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "InjectionSpec":
        data = json.loads(text)
        if data.get("magnitude") is not None:
            data["magnitude"] = tuple(data["magnitude"])
        return cls(**data)


def channel_sigma(x: np.ndarray, floor: float = SIGMA_FLOOR) -> float:
    return max(float(np.std(x)), floor)


# -- primitives -------------------------------------------------------------


def apply_global(x, points, k, sign, sigma_floor=SIGMA_FLOOR):
    """Set ``x[points]`` to ``mean +/- k * sigma`` of the whole channel."""
    out = np.array(x, dtype=np.float64)
    mean, sigma = float(np.mean(x)), channel_sigma(x, sigma_floor)
    out[np.asarray(points)] = mean + sign * k * sigma
    return out


def apply_contextual(x, points, k, sign, sigma_floor=SIGMA_FLOOR, context=CONTEXT_SIZE):
    """Like :func:`apply_global` but relative to a local neighbourhood of each point."""
    out = np.array(x, dtype=np.float64)
    n = len(x)
    for t in np.atleast_1d(points):
        lo = max(0, min(t - context // 2, n - context))
        hood = x[lo : lo + context]
        out[t] = float(np.mean(hood)) + sign * k * channel_sigma(hood, sigma_floor)
    return out


def apply_seasonal(x, start, end, factor):
    """Resample ``x[start:end]`` in time by ``factor``; the segment keeps its position.

    ``factor`` 2 plays the segment at double frequency (wrapping around), 0.5 at
    half frequency. Linear interpolation between samples.
    """
    out = np.array(x, dtype=np.float64)
    seg = out[start:end].copy()
    n = len(seg)
    periodic = np.append(seg, seg[0])
    src = np.mod(np.arange(n) * factor, n)
    out[start:end] = np.interp(src, np.arange(n + 1), periodic)
    return out


def apply_trend(x, onset, slope):
    """Add ``slope * (t - onset)`` from ``onset`` to the end."""
    out = np.array(x, dtype=np.float64)
    t = np.arange(len(x))
    out += np.where(t >= onset, slope * (t - onset), 0.0)
    return out


def apply_shapelet(x, start, end, noise):
    """Replace ``x[start:end]`` by a flat line at ``x[start]`` plus ``noise``."""
    out = np.array(x, dtype=np.float64)
    out[start:end] = x[start] + np.asarray(noise)
    return out


# -- seeded drawing -----------------------------------------------------------


def _segment(rng, n, fraction):
    length = max(2, min(n, int(round(fraction * n))))
    start = int(rng.integers(0, n - length + 1))
    return start, start + length


def _inject_channel(x, spec: InjectionSpec, rng, segment=None) -> np.ndarray:
    n = len(x)
    sigma = channel_sigma(x, spec.sigma_floor)
    mag = spec.magnitude or DEFAULT_MAGNITUDE.get(spec.type)
    if spec.type in ("global", "contextual"):
        points = rng.choice(n, size=int(rng.integers(1, 4)), replace=False)
        k = float(rng.uniform(*mag))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        if spec.type == "global":
            return apply_global(x, points, k, sign, spec.sigma_floor)
        return apply_contextual(x, points, k, sign, spec.sigma_floor)
    if spec.type == "trend":
        beta = float(rng.uniform(*mag))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        # onset in the first half keeps the end drift >= beta * sigma / 2
        onset = int(rng.integers(0, n // 2 + 1))
        return apply_trend(x, onset, sign * beta * sigma / n)
    start, end = segment
    if spec.type == "seasonal":
        factor = float(rng.choice(SEASONAL_FACTORS))
        return apply_seasonal(x, start, end, factor)
    noise = rng.uniform(-0.1 * sigma, 0.1 * sigma, size=end - start)
    return apply_shapelet(x, start, end, noise)


def _is_nontrivial(before, after, channels, sigma_floor) -> bool:
    for d in channels:
        sigma = channel_sigma(before[:, d], sigma_floor)
        if np.max(np.abs(after[:, d] - before[:, d])) >= 0.5 * sigma:
            return True
    return False


def inject(window: Window, spec: InjectionSpec) -> Window:
    """Return an anomalous copy of ``window`` with ``spec.type`` injected.

    Parameter draws are retried (deterministically) until at least one modified
    channel moves by half its in-window std; windows that stay trivial after
    ``MAX_ATTEMPTS`` draws (e.g. constant channels under seasonal resampling)
    raise ``InjectionError``.
    """
    values = np.asarray(window.values, dtype=np.float64)
    n, dims = values.shape
    if n < MIN_WINDOW:
        raise InjectionError(f"window too short for injection ({n} < {MIN_WINDOW})")
    if spec.type in SEGMENT_TYPES and n < MIN_SEGMENT_WINDOW:
        raise InjectionError(f"window too short for {spec.type} injection ({n} < {MIN_SEGMENT_WINDOW})")
    n_channels = math.ceil(spec.channel_fraction * dims)
    if n_channels < 1:
        raise InjectionError("channel_fraction selects zero channels")

    rng = np.random.default_rng(spec.seed)
    for _ in range(MAX_ATTEMPTS):
        channels = np.sort(rng.choice(dims, size=n_channels, replace=False))
        segment = None
        if spec.type in SEGMENT_TYPES:
            # one segment shared by every selected channel
            segment = _segment(rng, n, spec.segment_fraction or DEFAULT_SEGMENT_FRACTION[spec.type])
        out = values.copy()
        for d in channels:
            out[:, d] = _inject_channel(values[:, d], spec, rng, segment)
        if _is_nontrivial(values, out, channels, spec.sigma_floor):
            return window.with_values(out, spec.type)
    raise InjectionError(f"{spec.type} injection left the window unchanged after {MAX_ATTEMPTS} draws")


def inject_random(window: Window, rng_seed: int, types=ANOMALY_TYPES, **spec_kwargs) -> Window:
    """Inject a uniformly drawn anomaly type.

    Segment types are excluded on windows shorter than ``MIN_SEGMENT_WINDOW``;
    a draw that cannot perturb the window falls back to ``global``.
    """
    if window.length < MIN_SEGMENT_WINDOW:
        types = tuple(t for t in types if t not in SEGMENT_TYPES) or POINT_TYPES
    rng = np.random.default_rng(rng_seed)
    kind = types[int(rng.integers(len(types)))]
    seed = int(rng.integers(2**63))
    try:
        return inject(window, InjectionSpec(kind, seed, **spec_kwargs))
    except InjectionError:
        if kind == "global" or window.length < MIN_WINDOW:
            raise
        return inject(window, InjectionSpec("global", seed, **spec_kwargs))
