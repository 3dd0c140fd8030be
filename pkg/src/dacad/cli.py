"""Command-line entry points.

Each subcommand delegates to the library module of the same name. Runs are
described by one JSON config; command-line flags override its keys. Exit codes
are 0 on success, 2 for invalid input (bad config, missing entity, too-short
series) and 1 for failures during computation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .ablation import AblationPlan, run_ablation, write_table
from .core import TimeSeries, Window, make_windows, standardize
from .ingestion import LAYOUTS, load_dataset, load_scores, save_scores, write_csv_dir
from .injection import ANOMALY_TYPES, InjectionSpec, inject
from .model import load_checkpoint, model_hash, save_checkpoint
from .scoring import ScoredSeries, dataset_report, export_embeddings, score_series
from .synth import default_specs, make_benchmark
from .training import TrainConfig, train

log = logging.getLogger("dacad")


class UsageError(ValueError):
    """Invalid command-line input; maps to exit code 2."""


@dataclass
class RunConfig:
    """Dataset location, entity choice and output directory plus every TrainConfig key.

    ``source_split`` selects which split of the source entity supplies labelled
    windows. ``auto`` takes the train split when it is labelled and the test split
    otherwise, since some benchmarks ship unlabelled train splits. The target always
    trains on its (unlabelled) train split and is evaluated on its test split.
    """

    dataset: str = "data"
    layout: str = "csv_dir"
    source_entity: str = "source"
    target_entity: str = "target"
    source_split: str = "auto"
    output_dir: str = "run"
    threads: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        own = {f.name for f in fields(cls)} - {"train"}
        train_keys = {f.name for f in fields(TrainConfig)}
        unknown = set(data) - own - train_keys
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if data.get("layout", "csv_dir") not in LAYOUTS:
            raise UsageError(f"layout must be one of {LAYOUTS}")
        if data.get("source_split", "auto") not in ("auto", "train", "test"):
            raise UsageError("source_split must be 'auto', 'train' or 'test'")
        try:
            tc = TrainConfig.from_dict({k: v for k, v in data.items() if k in train_keys})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        return cls(**{k: v for k, v in data.items() if k in own}, train=tc)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        out.update(self.train.to_dict())
        return out


def _read_json(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def resolve_config(args) -> RunConfig:
    data = _read_json(args.config) if args.config else {}
    overrides = {
        "dataset": args.dataset,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "epochs": getattr(args, "epochs", None),
        "threads": getattr(args, "threads", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def _set_threads(n: int) -> None:
    torch.set_num_threads(max(1, int(n)))


def _series(bundle, entity_id: str, split: str) -> TimeSeries:
    return getattr(bundle.entity(entity_id), split)


def _source_series(bundle, cfg: RunConfig) -> TimeSeries:
    entity = bundle.entity(cfg.source_entity)
    if cfg.source_split == "auto":
        series = entity.train if entity.train.labels is not None else entity.test
    else:
        series = getattr(entity, cfg.source_split)
    if series.labels is None:
        raise UsageError(f"source entity {cfg.source_entity!r} has no labels in split {cfg.source_split!r}")
    log.info("source data: %s split of %s", series.split, cfg.source_entity)
    return series


# -- subcommands ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    _set_threads(cfg.threads)
    bundle = load_dataset(cfg.dataset, cfg.layout)
    source = _source_series(bundle, cfg)
    target = _series(bundle, cfg.target_entity, "train")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    model, _ = train(source, target, cfg.train, log_path=out / "train_log.csv")
    save_checkpoint(model, out / "checkpoint", extra={"run_config": cfg.to_dict()})
    print(f"checkpoint {out / 'checkpoint'} hash {model_hash(model)}")
    return 0


def cmd_score(args) -> int:
    _set_threads(args.threads)
    bundle = load_dataset(args.dataset, args.layout)
    model = load_checkpoint(args.checkpoint, expect_dims=bundle.dims)
    entities = args.entity or [e.entity_id for e in bundle.entities]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = model_hash(model)
    for entity_id in entities:
        series = _series(bundle, entity_id, args.split)
        scores = score_series(model, series, stats=model.norm_stats.get(args.stats))
        path = save_scores(entity_id, scores, out / f"{entity_id}.scores.csv", model_hash=digest)
        print(f"{entity_id}: {series.length} scores -> {path}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_dataset(args.dataset, args.layout)
    paths = sorted(Path(args.scores).glob("*.scores.csv"))
    if not paths:
        raise UsageError(f"no score files in {args.scores}")
    scored = []
    for path in paths:
        header, scores = load_scores(path)
        series = _series(bundle, header["entity"], args.split)
        if series.labels is None:
            raise UsageError(f"{header['entity']} has no labels in split {args.split!r}")
        if series.length != scores.size:
            raise UsageError(f"{path}: {scores.size} scores for a series of length {series.length}")
        scored.append(ScoredSeries(header["entity"], scores, series.labels))
    report = dataset_report(scored)
    if args.out:
        report.save(args.out)
    print(json.dumps({k: v for k, v in report.to_dict().items() if not isinstance(v, list)}, indent=2))
    return 0


def cmd_inject(args) -> int:
    values = np.loadtxt(args.input, delimiter=",", dtype=np.float64, ndmin=2)
    if args.spec:
        spec = InjectionSpec.from_json(Path(args.spec).read_text())
    else:
        magnitude = tuple(args.magnitude) if args.magnitude else None
        spec = InjectionSpec(args.type, seed=args.seed if args.seed is not None else 0,
                             channel_fraction=args.channel_fraction, magnitude=magnitude)
    window = Window(Path(args.input).stem, 0, values, None)
    injected = inject(window, spec)
    np.savetxt(args.output, injected.values, delimiter=",", fmt="%.17g")
    print(f"{injected.provenance}: {values.shape[0]}x{values.shape[1]} -> {args.output}")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    source, target = default_specs(seed)
    if args.length is not None:
        source, target = replace(source, length=args.length), replace(target, length=args.length)
    root = write_csv_dir(make_benchmark(source, target), args.out)
    (Path(root) / "synth_spec.json").write_text(
        json.dumps({"source": asdict(source), "target": asdict(target)}, indent=2)
    )
    print(f"synthetic dataset -> {root}")
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    _set_threads(cfg.threads)
    plan_data = _read_json(args.plan) if args.plan else {}
    plan_data.setdefault("config", cfg.train.to_dict())
    if args.seeds:
        plan_data["seeds"] = args.seeds
    plan = AblationPlan.from_dict(plan_data)
    bundle = load_dataset(cfg.dataset, cfg.layout)
    source = _source_series(bundle, cfg)
    target = bundle.entity(cfg.target_entity)
    results = run_ablation(plan, source, target.train, target.test)
    csv_path, _ = write_table(results, cfg.output_dir)
    print(csv_path.read_text(), end="")
    return 0 if all(r.error is None for r in results) else 1


def cmd_export_embeddings(args) -> int:
    _set_threads(args.threads)
    bundle = load_dataset(args.dataset, args.layout)
    model = load_checkpoint(args.checkpoint, expect_dims=bundle.dims)
    series = _series(bundle, args.entity, args.split)
    stats = model.norm_stats.get(args.stats)
    if stats is not None:
        series = standardize(series, stats)
    windows = make_windows(series, model.cfg.window_size, args.stride)
    path = export_embeddings(model, windows, args.out)
    print(f"{len(windows)} embeddings -> {path}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dacad", description=__doc__.splitlines()[0])
    p.add_argument("--json-errors", action="store_true", help="print errors as one JSON object on stderr")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset="data"):
        # dataset=None: the flag only overrides the RunConfig value
        sp.add_argument("--seed", type=int, default=None)
        if dataset is not False:
            sp.add_argument("--dataset", default=dataset)
            sp.add_argument("--layout", choices=LAYOUTS, default="csv_dir")

    sp = sub.add_parser("train", help="train on a labelled source and unlabelled target entity")
    sp.add_argument("--config", help="RunConfig JSON")
    sp.add_argument("--output-dir")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--threads", type=int)
    common(sp, dataset=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="write per-timestep anomaly scores")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--entity", action="append", help="repeatable; default every entity")
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--stats", choices=("target", "source"), default="target",
                    help="which domain's normalization statistics to apply")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--threads", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="metrics for a directory of score files")
    sp.add_argument("--scores", required=True, help="directory of *.scores.csv")
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--out", help="MetricReport JSON path")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("inject", help="inject one anomaly into a window CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--type", choices=ANOMALY_TYPES, default="global")
    sp.add_argument("--spec", help="InjectionSpec JSON (overrides --type)")
    sp.add_argument("--channel-fraction", type=float, default=0.3)
    sp.add_argument("--magnitude", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                    help="range for the type's magnitude parameter")
    common(sp, dataset=False)
    sp.set_defaults(func=cmd_inject)

    sp = sub.add_parser("synth", help="generate the synthetic two-domain benchmark")
    sp.add_argument("--out", required=True)
    sp.add_argument("--length", type=int, default=None)
    common(sp, dataset=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ablate", help="run an ablation plan")
    sp.add_argument("--config", help="RunConfig JSON (shared training settings)")
    sp.add_argument("--plan", help="AblationPlan JSON; default: every standard variant")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--output-dir")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--threads", type=int)
    common(sp, dataset=None)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("export-embeddings", help="classifier-space embeddings of an entity's windows")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--entity", required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--stats", choices=("target", "source"), default="target")
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threads", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_export_embeddings)
    return p


def _report_error(exc: BaseException, code: int, as_json: bool) -> int:
    if as_json:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None:
        torch.manual_seed(args.seed)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        # input validation: bad config, missing entity or file, too-short series
        return _report_error(exc, 2, args.json_errors)
    except Exception as exc:  # noqa: BLE001 - uniform exit code for runtime failures
        log.debug("unhandled error", exc_info=True)
        return _report_error(exc, 1, args.json_errors)


if __name__ == "__main__":
    sys.exit(main())
