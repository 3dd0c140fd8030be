"""Dataset loading, normalization statistics and score files.

Two on-disk layouts are understood. Both keep one sub-directory per split
(``train/`` and ``test/``) under the dataset root:

``csv_dir``
    ``<split>/<entity>.csv`` holds one row per timestep and one column per
    channel, no header. ``<split>/<entity>.labels.csv`` holds one 0/1 per line.

``raw_f32``
    ``<split>/<entity>.json`` is a sidecar with keys ``entity``, ``length``,
    ``dims`` and ``labels_path`` (relative to the sidecar, or null). The values
    live next to it in ``<entity>.f32`` as row-major little-endian float32.

An optional ``dataset.json`` at the root may set ``name`` and
``labelled_splits``; a split listed there must have labels for every entity.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import EPS_STD, ChannelStats, SeriesError, TimeSeries

log = logging.getLogger(__name__)

LAYOUTS = ("csv_dir", "raw_f32")
SPLITS = ("train", "test")


class DatasetError(ValueError):
    pass


@dataclass
class EntityPair:
    entity_id: str
    train: TimeSeries
    test: TimeSeries


@dataclass
class DatasetBundle:
    name: str
    entities: list[EntityPair]

    def __post_init__(self):
        dims = {s.dims for e in self.entities for s in (e.train, e.test)}
        if len(dims) > 1:
            raise DatasetError(f"ragged channel counts across entities: {sorted(dims)}")

    @property
    def dims(self) -> int:
        return self.entities[0].train.dims

    @property
    def anomaly_ratio(self) -> float:
        anomalous = total = 0
        for e in self.entities:
            for s in (e.train, e.test):
                if s.labels is not None:
                    anomalous += int(s.labels.sum())
                    total += s.length
        return anomalous / total if total else 0.0

    def entity(self, entity_id: str) -> EntityPair:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise DatasetError(f"entity not found: {entity_id!r}")

    def summary(self) -> dict:
        return {
            "name": self.name,
            "entities": len(self.entities),
            "dims": self.dims,
            "train_size": sum(e.train.length for e in self.entities),
            "test_size": sum(e.test.length for e in self.entities),
            "anomaly_ratio": self.anomaly_ratio,
        }


def _read_labels(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=1).astype(np.int64)


def _check_finite(values: np.ndarray, entity: str, split: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        t, d = np.argwhere(bad)[0]
        raise DatasetError(f"{entity} ({split}): non-finite value at timestep {t}, channel {d}")


def _load_csv_split(split_dir: Path, split: str) -> dict[str, TimeSeries]:
    out = {}
    for path in sorted(split_dir.glob("*.csv")):
        if path.name.endswith(".labels.csv"):
            continue
        entity = path.stem
        values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        _check_finite(values, entity, split)
        label_path = split_dir / f"{entity}.labels.csv"
        labels = _read_labels(label_path) if label_path.exists() else None
        out[entity] = TimeSeries(entity, values, labels, split)
    return out


def _load_raw_split(split_dir: Path, split: str) -> dict[str, TimeSeries]:
    out = {}
    for sidecar in sorted(split_dir.glob("*.json")):
        meta = json.loads(sidecar.read_text())
        missing = {"entity", "length", "dims"} - meta.keys()
        if missing:
            raise DatasetError(f"{sidecar}: sidecar missing keys {sorted(missing)}")
        entity, length, dims = meta["entity"], int(meta["length"]), int(meta["dims"])
        raw = np.fromfile(sidecar.with_suffix(".f32"), dtype="<f4")
        if raw.size != length * dims:
            raise DatasetError(f"{entity} ({split}): expected {length}x{dims} values, found {raw.size}")
        values = raw.reshape(length, dims).astype(np.float64)
        _check_finite(values, entity, split)
        labels = None
        if meta.get("labels_path"):
            labels = _read_labels(sidecar.parent / meta["labels_path"])
        out[entity] = TimeSeries(entity, values, labels, split)
    return out


def load_dataset(root: str | Path, layout: str = "csv_dir") -> DatasetBundle:
    root = Path(root)
    if layout not in LAYOUTS:
        raise DatasetError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    manifest = {}
    if (root / "dataset.json").exists():
        manifest = json.loads((root / "dataset.json").read_text())
    loader = _load_csv_split if layout == "csv_dir" else _load_raw_split

    splits = {}
    for split in SPLITS:
        split_dir = root / split
        try:
            splits[split] = loader(split_dir, split) if split_dir.is_dir() else {}
        except SeriesError as exc:
            raise DatasetError(str(exc)) from exc
    names = sorted(set(splits["train"]) | set(splits["test"]))
    if not names:
        raise DatasetError(f"no entities found under {root}")

    for split in manifest.get("labelled_splits", []):
        for name in names:
            series = splits[split].get(name)
            if series is not None and series.labels is None:
                raise DatasetError(f"{name} ({split}): missing label file for labelled split")

    entities = []
    for name in names:
        if name not in splits["train"] or name not in splits["test"]:
            raise DatasetError(f"entity {name!r} lacks a train or test split")
        entities.append(EntityPair(name, splits["train"][name], splits["test"][name]))
    return DatasetBundle(manifest.get("name", root.name), entities)


def write_csv_dir(bundle: DatasetBundle, root: str | Path) -> Path:
    """Write ``bundle`` in the ``csv_dir`` layout (used by the synthetic benchmark)."""
    root = Path(root)
    labelled = []
    for split in SPLITS:
        (root / split).mkdir(parents=True, exist_ok=True)
        if all(getattr(e, split).labels is not None for e in bundle.entities):
            labelled.append(split)
    for e in bundle.entities:
        for split in SPLITS:
            series: TimeSeries = getattr(e, split)
            np.savetxt(root / split / f"{e.entity_id}.csv", series.values, delimiter=",", fmt="%.17g")
            if series.labels is not None:
                np.savetxt(root / split / f"{e.entity_id}.labels.csv", series.labels, fmt="%d")
    (root / "dataset.json").write_text(
        json.dumps({"name": bundle.name, "labelled_splits": labelled}, indent=2)
    )
    return root


def write_raw_f32(series: TimeSeries, split_dir: str | Path) -> Path:
    split_dir = Path(split_dir)
    split_dir.mkdir(parents=True, exist_ok=True)
    series.values.astype("<f4").tofile(split_dir / f"{series.entity_id}.f32")
    labels_path = None
    if series.labels is not None:
        labels_path = f"{series.entity_id}.labels.csv"
        np.savetxt(split_dir / labels_path, series.labels, fmt="%d")
    sidecar = split_dir / f"{series.entity_id}.json"
    sidecar.write_text(
        json.dumps(
            {
                "entity": series.entity_id,
                "length": series.length,
                "dims": series.dims,
                "labels_path": labels_path,
            }
        )
    )
    return sidecar


def compute_channel_stats(series_set: Sequence[TimeSeries], eps: float = EPS_STD) -> ChannelStats:
    """Per-channel mean/std pooled over every timestep of every series."""
    if not series_set:
        raise DatasetError("cannot compute stats of an empty series set")
    dims = {s.dims for s in series_set}
    if len(dims) != 1:
        raise DatasetError(f"inconsistent channel counts: {sorted(dims)}")
    pooled = np.concatenate([s.values for s in series_set], axis=0)
    return ChannelStats(pooled.mean(axis=0), np.maximum(pooled.std(axis=0), eps), eps)


def save_scores(
    entity_id: str,
    scores: Iterable[float],
    path: str | Path,
    model_hash: Optional[str] = None,
    threshold: Optional[float] = None,
) -> Path:
    """Write ``timestep,score`` rows after a one-line JSON header (``# {...}``).

    Floats are written with ``repr`` so reloading is bit-exact.
    """
    scores = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be a vector")
    if not np.isfinite(scores).all():
        raise ValueError(f"{entity_id}: scores contain non-finite values")
    path = Path(path)
    header = {"entity": entity_id, "count": int(scores.size), "model_hash": model_hash}
    if threshold is not None:
        header["threshold"] = float(threshold)
    lines = [f"# {json.dumps(header)}", "timestep,score"]
    lines += [f"{t},{float(s)!r}" for t, s in enumerate(scores)]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_scores(path: str | Path) -> tuple[dict, np.ndarray]:
    """Inverse of :func:`save_scores`; returns (header, scores)."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise ValueError(f"{path}: missing score header")
    header = json.loads(text[0][2:])
    rows = text[2:]
    scores = np.array([float(r.split(",", 1)[1]) for r in rows if r], dtype=np.float64)
    if scores.size != header["count"]:
        raise ValueError(f"{path}: header declares {header['count']} scores, found {scores.size}")
    return header, scores
