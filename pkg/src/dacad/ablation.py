"""Controlled ablations: loss-term removal, classifier heads and injection on/off.

Every variant of a plan is trained from the same shared config and seeds; only the
ablated element differs, so differences in the comparison table come from that
element alone.
"""

from __future__ import annotations

import csv
import json
import logging
import traceback
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import TimeSeries
from .losses import LossWeights
from .model import HEADS
from .scoring import MetricReport, ScoredSeries, dataset_report, score_series
from .training import TrainConfig, train

log = logging.getLogger(__name__)


class AblationError(ValueError):
    pass


@dataclass
class Variant:
    name: str
    weights: dict = field(default_factory=dict)
    head: str = "cec"
    injection: bool = True

    def __post_init__(self):
        if self.head not in HEADS:
            raise AblationError(f"variant {self.name!r}: unknown head {self.head!r}")
        unknown = set(self.weights) - {"alpha", "beta", "gamma", "lam", "margin"}
        if unknown:
            raise AblationError(f"variant {self.name!r}: unknown weight overrides {sorted(unknown)}")

    def apply(self, base: TrainConfig, seed: int) -> TrainConfig:
        weights = LossWeights(**{**asdict(base.weights), **self.weights})
        return replace(base, weights=weights, head=self.head, injection=self.injection, seed=seed)


LOSS_VARIANTS = [
    Variant("full"),
    Variant("w/o L_SelfCont", {"beta": 0.0}),
    Variant("w/o L_SupCont", {"alpha": 0.0}),
    Variant("w/o L_Disc", {"gamma": 0.0}),
    Variant("w/o L_Cls", {"lam": 0.0}),
]
HEAD_VARIANTS = [Variant("full"), Variant("plain_bce", head="plain_bce"), Variant("deepsvdd", head="deepsvdd")]
INJECTION_VARIANTS = [Variant("full"), Variant("w/o injection", injection=False)]


def default_variants() -> list[Variant]:
    seen, out = set(), []
    for v in LOSS_VARIANTS + HEAD_VARIANTS + INJECTION_VARIANTS:
        if v.name not in seen:
            seen.add(v.name)
            out.append(v)
    return out


@dataclass
class AblationPlan:
    variants: list[Variant]
    config: TrainConfig
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def __post_init__(self):
        self.variants = [v if isinstance(v, Variant) else Variant(**v) for v in self.variants]
        if isinstance(self.config, dict):
            self.config = TrainConfig.from_dict(self.config)
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise AblationError(f"variant names must be unique, got {names}")
        if not self.variants or not self.seeds:
            raise AblationError("plan needs at least one variant and one seed")

    @classmethod
    def from_dict(cls, data: dict) -> "AblationPlan":
        unknown = set(data) - {"variants", "config", "seeds"}
        if unknown:
            raise AblationError(f"unknown plan keys: {sorted(unknown)}")
        variants = data.get("variants")
        return cls(
            variants=default_variants() if variants is None else variants,
            config=data.get("config", {}),
            seeds=data.get("seeds", [0, 1, 2]),
        )


@dataclass
class VariantResult:
    name: str
    reports: list[MetricReport] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    error: Optional[str] = None

    def median(self, key: str) -> float:
        vals = [getattr(r, key) for r in self.reports]
        return float(np.median(vals)) if vals else float("nan")

    def row(self) -> dict:
        return {
            "variant": self.name,
            "seeds": len(self.reports),
            "f1": self.median("f1"),
            "aupr": self.median("aupr_mean"),
            "aupr_std": self.median("aupr_std"),
            "auroc": self.median("auroc_mean"),
            "auroc_std": self.median("auroc_std"),
            "error": self.error or "",
        }


def evaluate(model, series: TimeSeries) -> MetricReport:
    scores = score_series(model, series, stats=model.norm_stats.get("target"))
    return dataset_report([ScoredSeries(series.entity_id, scores, series.labels)])


def run_ablation(
    plan: AblationPlan,
    source: TimeSeries,
    target_train: TimeSeries,
    target_test: TimeSeries,
) -> list[VariantResult]:
    """Train every variant for every seed and evaluate on the labelled target test series.

    A variant that fails records its error and the remaining variants still run.
    """
    if target_test.labels is None:
        raise AblationError("target test series must be labelled for evaluation")
    results = []
    for variant in plan.variants:
        res = VariantResult(variant.name)
        for seed in plan.seeds:
            try:
                model, _ = train(source, target_train, variant.apply(plan.config, seed))
                res.reports.append(evaluate(model, target_test))
                res.seeds.append(seed)
            except Exception as exc:  # noqa: BLE001 - one variant must not abort the others
                log.error("variant %s seed %d failed: %s", variant.name, seed, exc)
                log.debug(traceback.format_exc())
                res.error = f"{type(exc).__name__}: {exc}"
                break
        results.append(res)
        if res.reports:
            log.info("%s: AUROC %.3f (median of %d)", variant.name, res.median("auroc_mean"), len(res.reports))
    return results


def write_table(results: Sequence[VariantResult], out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``ablation.csv`` (one row per variant) and ``ablation.json`` (with per-seed reports)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r.row() for r in results]
    csv_path = out_dir / "ablation.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["variant"])
        writer.writeheader()
        writer.writerows(rows)
    json_path = out_dir / "ablation.json"
    payload = [
        {**r.row(), "per_seed": [{"seed": s, **rep.to_dict()} for s, rep in zip(r.seeds, r.reports)]}
        for r in results
    ]
    json_path.write_text(json.dumps(payload, indent=2))
    return csv_path, json_path
