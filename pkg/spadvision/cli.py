"""
Command-line front end.

    spadvision simulate --out data/desk --frames 512 --test-frames 128
    spadvision train    --data data/desk --kind histogram --out runs/hist
    spadvision predict  --data data/desk --checkpoint runs/hist/checkpoint --out runs/hist/pred
    spadvision evaluate --data data/desk --kind depth --runs 5 --out runs/depth
    spadvision compare  runs/hist runs/depth --out runs/compare
    spadvision bench    --data data/desk --out runs/bench

Every command writes ``config.resolved`` and ``run.log`` into its output
directory. Values come from built-in defaults, then ``--config FILE``,
then explicit flags.

Exit codes:
    0  success
    1  any other spadvision error
    2  invalid configuration or usage (including kind/checkpoint mismatch)
    3  dataset, checkpoint or file errors
    4  training failure
    5  evaluation failure
    6  benchmark precondition failure
"""

import argparse
import itertools
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bench import bench_depth_chain, bench_inference
from .config import Config, RunConfig, load_config
from .datakit import CLASS_NAMES, boxes_to_onehot, onehot_to_class_map, onehot_to_rgb
from .errors import (
    BenchmarkError,
    ConfigError,
    DatasetError,
    EvaluationError,
    ShapeMismatchError,
    SpadVisionError,
    TrainingError,
)
from .evalkit import (
    CLASS_IDS,
    evaluate_frames,
    metrics,
    outcomes_from_entries,
    outcomes_to_entries,
    paired_failure_table,
    welch_ttest,
)
from .histproc import INPUT_KINDS, INPUT_SHAPES, ComConfig
from .io import (
    DatasetWriter,
    format_metrics_table,
    format_paired_table,
    format_verdict_grid,
    read_dataset,
    read_summary,
    write_ppm,
    write_summary,
)
from .nn import TrainConfig, TverskyConfig, UnetSpec, build_unet, predict, train
from .pipeline import dataset_calibration, label_scale, load_arrays
from .sensor import TimingConfig
from .simkit import (
    SBR_CATEGORIES,
    IllumSchedule,
    SceneGeneratorConfig,
    moving_object_sequence,
    sbr_category_counts,
    simulate_dataset,
    simulate_sequence,
)

logger = logging.getLogger("spadvision")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_TRAINING = 4
EXIT_EVALUATION = 5
EXIT_BENCHMARK = 6

_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ShapeMismatchError, EXIT_CONFIG),
    (DatasetError, EXIT_DATASET),
    (TrainingError, EXIT_TRAINING),
    (EvaluationError, EXIT_EVALUATION),
    (BenchmarkError, EXIT_BENCHMARK),
)


def exit_code_for(exc: BaseException) -> int:
    """Documented exit code of an exception raised by a command."""
    for cls, code in _EXIT_CODES:
        if isinstance(exc, cls):
            return code
    if isinstance(exc, OSError):
        return EXIT_DATASET
    return EXIT_ERROR


# Defaults per command ---------------------------------------------------

_TIMING = TimingConfig()

_COMMON = {"seed": 0, "workers": None, "chunk_size": None, "debug_checks": None, "out": None}

_TRAIN = dict(
    {"data": None, "kind": "histogram", "augment": True, "net.base_channels": 16, "net.n_levels": 3,
     "com.t_l": ComConfig().t_l, "com.t_r": ComConfig().t_r},
    **{key: value for key, value in TrainConfig().as_mapping().items() if key != "train.seed"},
    **{f"tversky.{name}": getattr(TverskyConfig(), name) for name in ("alpha", "beta", "gamma", "smooth")},
)

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "simulate": dict(
        _COMMON,
        n_frames=512,
        n_test=128,
        val_fraction=0.15,
        skew_sigma=0.3,
        calibration_average=16,
        error_strategy="raise",
        sbr_target=None,
        moving=False,
        split_backdrop=False,
        **{
            "moving.n_frames": 64,
            "moving.class_id": 4,
            "moving.velocity": [0.75, 0.0],
            "split_backdrop.range": [4.5, 5.5],
            "illum.signal_scale": IllumSchedule().signal_scale,
            "illum.sbr_range": list(IllumSchedule().sbr_range),
            "illum.exposures_ms": list(IllumSchedule().exposures_ms),
            "timing.bin_width": _TIMING.bin_width,
            "timing.pulse_fwhm": _TIMING.pulse_fwhm,
            "timing.range_offset": _TIMING.range_offset,
        },
        **{key: list(value) if isinstance(value, tuple) else value
           for key, value in SceneGeneratorConfig().as_mapping().items()},
    ),
    "train": dict(_COMMON, **_TRAIN),
    "predict": dict(_COMMON, data=None, checkpoint=None, kind=None, split="test", ids=None,
                    **{"com.t_l": ComConfig().t_l, "com.t_r": ComConfig().t_r}),
    "evaluate": dict(dict(_COMMON, **_TRAIN), checkpoint=None, runs=0, oracle=False, iou_threshold=0.5,
                     min_area=2, split="test", kind=None),
    "compare": dict(_COMMON, inputs=None, alpha=0.05),
    "bench": dict(_COMMON, data=None, checkpoint=None, frames=1000, warmup=100, repeats=3,
                  kinds=list(INPUT_KINDS), **{"com.t_l": ComConfig().t_l, "com.t_r": ComConfig().t_r}),
}


# Helpers -----------------------------------------------------------------

def _as_tuple(value) -> tuple:
    return tuple(value) if isinstance(value, (list, tuple)) else (value,)


def _prefixed(cfg: RunConfig, prefix: str) -> Dict[str, Any]:
    values = cfg.as_dict()
    return {key[len(prefix):]: values[key] for key in values if key.startswith(prefix)}


def _timing(cfg: RunConfig) -> TimingConfig:
    return TimingConfig(**_prefixed(cfg, "timing."))


def _com(cfg: RunConfig) -> ComConfig:
    return ComConfig(**_prefixed(cfg, "com."))


def _tversky(cfg: RunConfig) -> TverskyConfig:
    return TverskyConfig(**_prefixed(cfg, "tversky."))


def _train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    return replace(TrainConfig.from_mapping(cfg.as_dict()), seed=seed)


def _kind(cfg: RunConfig, key: str = "kind") -> str:
    kind = cfg[key]
    if kind not in INPUT_KINDS:
        raise ConfigError(f"--kind must be one of {', '.join(INPUT_KINDS)}, got {kind!r}")
    return kind


def _split_ids(dataset, split: str) -> List[int]:
    if split not in dataset.split:
        raise ConfigError(f"unknown split {split!r}; expected train, val or test")
    return list(dataset.split[split])


def _scaled_labels(dataset, ids: Sequence[int], kind: str) -> List[list]:
    scale = label_scale(kind)
    return [[box.scaled(scale) for box in dataset.labels(i)] for i in ids]


def _class_names() -> List[str]:
    return list(CLASS_NAMES)


# simulate -----------------------------------------------------------------

def _print_sbr_summary(dataset) -> None:
    print(f"{'split':<8}{'frames':>8}{'mean SBR':>12}" + "".join(f"{c:>12}" for c in SBR_CATEGORIES))
    for split, ids in dataset.split.items():
        sbrs = [float(dataset.meta(i)["sbr"]) for i in ids]
        counts = sbr_category_counts(sbrs)
        mean = f"{np.mean(sbrs):12.4f}" if sbrs else f"{'-':>12}"
        print(f"{split:<8}{len(ids):>8}{mean}" + "".join(f"{counts[c]:>12}" for c in SBR_CATEGORIES))


def cmd_simulate(cfg: RunConfig) -> Path:
    cfg.require(["out"])
    out = Path(cfg["out"])
    timing = _timing(cfg)
    Config(error_strategy=cfg["error_strategy"]).apply()
    schedule_values = _prefixed(cfg, "illum.")
    if cfg["sbr_target"] is not None:
        schedule_values["sbr_range"] = (cfg["sbr_target"], cfg["sbr_target"])
    schedule = IllumSchedule(**{key: _as_tuple(value) if key != "signal_scale" else value
                                for key, value in schedule_values.items()})
    echo = {key: value for key, value in cfg.as_dict().items() if key != "out"}

    if cfg["moving"]:
        scenes = moving_object_sequence(int(cfg["moving.n_frames"]), class_id=int(cfg["moving.class_id"]),
                                        velocity=tuple(cfg["moving.velocity"]))
        target = cfg["sbr_target"] if cfg["sbr_target"] is not None else schedule.sbr_range[0]
        simulate_sequence(out, scenes, target, cfg["seed"], schedule.signal_scale, timing,
                          cfg["skew_sigma"], cfg["calibration_average"], echo)
    else:
        generator_config = SceneGeneratorConfig.from_mapping(
            {key: _as_tuple(value) if key.endswith(("range", "objects", "classes")) else value
             for key, value in cfg.as_dict().items() if key.startswith("scene.")})
        test_config = None
        if cfg["split_backdrop"]:
            test_config = replace(generator_config, backdrop_depth_range=tuple(cfg["split_backdrop.range"]))
        simulate_dataset(out, generator_config, schedule, int(cfg["n_frames"]), int(cfg["seed"]), timing,
                         n_test=int(cfg["n_test"]), test_generator_config=test_config,
                         val_fraction=cfg["val_fraction"], skew_sigma=cfg["skew_sigma"],
                         calibration_average=int(cfg["calibration_average"]), max_workers=cfg["workers"],
                         config_echo=echo)
    _print_sbr_summary(read_dataset(out))
    return out


# train ----------------------------------------------------------------------

def _train_once(dataset, cfg: RunConfig, kind: str, seed: int):
    train_ids, val_ids = _split_ids(dataset, "train"), _split_ids(dataset, "val")
    if not train_ids or not val_ids:
        raise TrainingError(f"{dataset.path} has {len(train_ids)} train and {len(val_ids)} validation frames")
    com = _com(cfg)
    train_split = load_arrays(dataset, train_ids, kind, with_flips=bool(cfg["augment"]), cfg=com)
    val_split = load_arrays(dataset, val_ids, kind, cfg=com)
    spec = UnetSpec.for_kind(kind, base_channels=int(cfg["net.base_channels"]), n_levels=int(cfg["net.n_levels"]))
    model = build_unet(spec, seed, kind=kind)
    logger.info("Training %s model (%d parameters) on %d frames, validating on %d",
                kind, model.parameter_count(), len(train_split[0]), len(val_split[0]))
    return train(model, train_split, val_split, _train_config(cfg, seed), _tversky(cfg))


def _save_training(run_dir: Path, model, history, seed: int, data) -> None:
    from .io.checkpoint import save_checkpoint

    save_checkpoint(run_dir / "checkpoint", model, meta={
        "seed": seed, "data": data, "best_epoch": history.best_epoch,
        "best_val_loss": repr(history.best_val_loss), "epochs": history.stopped_epoch,
    })
    write_summary(run_dir / "history.txt", history.as_dict())


def cmd_train(cfg: RunConfig) -> Path:
    cfg.require(["out", "data", "kind"])
    out = Path(cfg["out"])
    kind = _kind(cfg)
    dataset = read_dataset(cfg["data"], verify=True)
    model, history = _train_once(dataset, cfg, kind, int(cfg["seed"]))
    _save_training(out, model, history, int(cfg["seed"]), cfg["data"])
    print(f"best epoch {history.best_epoch} of {history.stopped_epoch}, "
          f"validation loss {history.best_val_loss:.5f}")
    return out


# predict --------------------------------------------------------------------

def _load_model(path, kind: Optional[str]):
    from .io.checkpoint import load_checkpoint

    model, meta = load_checkpoint(path)
    if kind is not None and model.kind is not None and kind != model.kind:
        raise ShapeMismatchError(f"checkpoint {path} was trained on {model.kind} input, not {kind}")
    if model.kind is None and kind is None:
        raise ConfigError(f"checkpoint {path} does not record its input kind; pass --kind")
    model.kind = model.kind or kind
    return model, meta


def cmd_predict(cfg: RunConfig) -> Path:
    cfg.require(["out", "data", "checkpoint"])
    out = Path(cfg["out"])
    model, _ = _load_model(cfg["checkpoint"], cfg["kind"])
    kind = model.kind
    dataset = read_dataset(cfg["data"])
    ids = [int(i) for i in _as_tuple(cfg["ids"])] if cfg["ids"] is not None else _split_ids(dataset, cfg["split"])
    if not ids:
        raise DatasetError(f"no frames selected from {dataset.path}")
    x, _ = load_arrays(dataset, ids, kind, cfg=_com(cfg))
    _, class_maps = predict(model, x)
    palette = dataset.palette
    with DatasetWriter(out / "predictions", config={"kind": kind, "data": cfg["data"]}, palette=palette) as writer:
        for frame_id, class_map in zip(ids, class_maps):
            mask = (class_map[..., None] == np.arange(len(palette))).astype(np.uint8)
            writer.add_record({"mask": mask}, labels=dataset.labels(frame_id), meta={"frame": frame_id})
            write_ppm(out / "masks" / f"frame_{frame_id:05d}.ppm", onehot_to_rgb(mask, palette))
        writer.set_split(test=list(range(len(ids))))
    print(f"wrote {len(ids)} {kind} predictions to {out}")
    return out


# evaluate -------------------------------------------------------------------

def _oracle_maps(dataset, ids: Sequence[int], kind: str) -> List[np.ndarray]:
    h, w = INPUT_SHAPES[kind][:2]
    return [onehot_to_class_map(boxes_to_onehot(labels, h, w)) for labels in _scaled_labels(dataset, ids, kind)]


def _evaluate_maps(dataset, ids, kind: str, maps, cfg: RunConfig):
    scale = label_scale(kind)
    return evaluate_frames(maps, _scaled_labels(dataset, ids, kind), float(cfg["iou_threshold"]),
                           int(cfg["min_area"]) * scale * scale, max_workers=cfg["workers"])


def cmd_evaluate(cfg: RunConfig) -> Path:
    cfg.require(["out", "data"])
    out = Path(cfg["out"])
    dataset = read_dataset(cfg["data"], verify=True)
    ids = _split_ids(dataset, cfg["split"])
    if not ids:
        raise EvaluationError(f"{dataset.path} has no {cfg['split']} frames")
    runs = int(cfg["runs"])
    modes = sum([bool(cfg["oracle"]), cfg["checkpoint"] is not None, runs > 0])
    if modes != 1:
        raise ConfigError("evaluate needs exactly one of --oracle, --checkpoint or --runs N")

    names = _class_names()
    per_run: List[List] = []
    if cfg["oracle"]:
        kind = _kind(cfg)
        per_run.append(_evaluate_maps(dataset, ids, kind, _oracle_maps(dataset, ids, kind), cfg))
    elif cfg["checkpoint"] is not None:
        model, _ = _load_model(cfg["checkpoint"], cfg.get("kind"))
        kind = model.kind
        x, _ = load_arrays(dataset, ids, kind, cfg=_com(cfg))
        per_run.append(_evaluate_maps(dataset, ids, kind, list(predict(model, x)[1]), cfg))
    else:
        kind = _kind(cfg)
        x, _ = load_arrays(dataset, ids, kind, cfg=_com(cfg))
        for run in range(runs):
            seed = int(cfg["seed"]) + run
            logger.info("Run %d/%d (seed %d)", run + 1, runs, seed)
            model, history = _train_once(dataset, cfg, kind, seed)
            _save_training(out / "runs" / str(run), model, history, seed, cfg["data"])
            per_run.append(_evaluate_maps(dataset, ids, kind, list(predict(model, x)[1]), cfg))

    summary: Dict[str, Any] = {"kind": kind, "data": cfg["data"], "split": cfg["split"], "runs": len(per_run),
                               "frames": len(ids), "iou_threshold": float(cfg["iou_threshold"]), "run": {}}
    detections = {}
    for run, outcomes in enumerate(per_run):
        report = metrics(outcomes, CLASS_IDS)
        table = format_metrics_table(report, names)
        (out / f"metrics_run{run}.txt").parent.mkdir(parents=True, exist_ok=True)
        (out / f"metrics_run{run}.txt").write_text(table, encoding="utf-8")
        print(f"run {run} ({kind})\n{table}")
        summary["run"][str(run)] = {
            "f1": dict({names[c]: m.f1 for c, m in report.per_class.items()}, all=report.aggregate.f1),
            "accuracy": {names[c]: m.accuracy for c, m in report.per_class.items()},
        }
        detections[f"run{run}"] = outcomes_to_entries(outcomes)
    write_summary(out / "summary.txt", summary)
    write_summary(out / "detections.txt", detections)
    return out


# compare --------------------------------------------------------------------

class _Campaign:
    """Per-run F-scores and detections of one evaluate directory."""

    def __init__(self, path: Path):
        self.path = path
        summary = read_summary(path / "summary.txt")
        try:
            self.kind = summary["kind"]
            self.data = summary["data"]
            self.runs = int(summary["runs"])
        except (KeyError, ValueError):
            raise EvaluationError(f"{path} is not an evaluate output directory") from None
        names = _class_names()
        self.f1 = {c: [float(summary[f"run.{r}.f1.{names[c]}"]) for r in range(self.runs)] for c in CLASS_IDS}
        detections = read_summary(path / "detections.txt")
        self.outcomes = []
        for run in range(self.runs):
            prefix = f"run{run}."
            entries = {key[len(prefix):]: value for key, value in detections.items() if key.startswith(prefix)}
            self.outcomes.append(outcomes_from_entries(entries))


def _check_pairing(campaigns: Sequence[_Campaign]) -> None:
    most = max(c.runs for c in campaigns)
    missing = [f"{c.kind} ({c.path}) lacks runs {', '.join(str(r) for r in range(c.runs, most))}"
               for c in campaigns if c.runs < most]
    if missing:
        raise EvaluationError("mismatched run counts: " + "; ".join(missing))
    datasets = {c.data for c in campaigns}
    if len(datasets) > 1:
        raise EvaluationError(f"campaigns were evaluated on different datasets: {sorted(datasets)}")


def cmd_compare(cfg: RunConfig) -> Path:
    cfg.require(["out", "inputs"])
    out = Path(cfg["out"])
    inputs = [Path(p) for p in _as_tuple(cfg["inputs"])]
    if len(inputs) < 2:
        raise ConfigError("compare needs at least two evaluate directories")
    campaigns = [_Campaign(path) for path in inputs]
    _check_pairing(campaigns)
    names = _class_names()
    verdicts, summary = {}, {}
    for a, b in itertools.combinations(campaigns, 2):
        label = f"{a.kind}_vs_{b.kind}"
        verdicts[(a.kind, b.kind)] = {c: welch_ttest(a.f1[c], b.f1[c], float(cfg["alpha"])) for c in CLASS_IDS}
        pooled_a = [o for run in a.outcomes for o in run]
        pooled_b = [o for run in b.outcomes for o in run]
        rows = paired_failure_table(pooled_a, pooled_b, CLASS_IDS)
        table = format_paired_table(rows, a.kind, b.kind, names)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"paired_{label}.txt").write_text(table, encoding="utf-8")
        print(f"{a.kind} vs {b.kind}\n{table}")
        summary[label] = {
            names[c]: {"t": r.t, "dof": r.dof, "p": r.p_value, "direction": r.direction,
                       "mean_a": float(np.mean(a.f1[c])), "mean_b": float(np.mean(b.f1[c]))}
            for c, r in verdicts[(a.kind, b.kind)].items()
        }
    grid = format_verdict_grid(verdicts, names)
    (out / "verdicts.txt").write_text(grid, encoding="utf-8")
    print(grid)
    write_summary(out / "summary.txt", summary)
    return out


# bench ----------------------------------------------------------------------

def cmd_bench(cfg: RunConfig) -> Path:
    cfg.require(["out", "data"])
    out = Path(cfg["out"])
    dataset = read_dataset(cfg["data"])
    n_frames, warmup, repeats = int(cfg["frames"]), int(cfg["warmup"]), int(cfg["repeats"])
    if len(dataset) < warmup:
        raise BenchmarkError(f"{dataset.path} holds {len(dataset)} frames, fewer than the {warmup}-frame warmup")
    tensors = [dataset.tensors(i) for i in range(len(dataset))]
    calib = dataset_calibration(dataset)
    com = _com(cfg)
    workers = int(cfg["workers"] or Config().worker_count)
    results = [bench_depth_chain([t["hist"] for t in tensors], calib, 1, n_frames, warmup, repeats, com)]
    if workers > 1:
        results.append(bench_depth_chain([t["hist"] for t in tensors], calib, workers, n_frames, warmup,
                                         repeats, com))
    if cfg["checkpoint"] is not None:
        model, _ = _load_model(cfg["checkpoint"], None)
        models = [model]
    else:
        models = [build_unet(UnetSpec.for_kind(kind), int(cfg["seed"]), kind=kind)
                  for kind in _as_tuple(cfg["kinds"])]
    for model in models:
        results.append(bench_inference(model, model.kind, tensors, calib, n_frames, warmup, repeats))

    print(f"{'workload':<24}{'workers':>8}{'fps':>12}{'+-':>10}{'mean ms':>10}{'p99 ms':>10}")
    for r in results:
        print(f"{r.name:<24}{r.workers:>8}{r.fps:>12.1f}{r.fps_std:>10.1f}{r.mean_ms:>10.3f}{r.p99_ms:>10.3f}")
    write_summary(out / "bench.txt", {r.name.replace(" ", "_"): r.as_dict() for r in results})
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


# Argument parsing -------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--workers", type=int, help="worker count for frame-parallel steps")
    parser.add_argument("--chunk-size", dest="chunk_size", type=int, help="items per task in process pools (0 = automatic)")
    parser.add_argument("--debug-checks", dest="debug_checks", action="store_const", const=True,
                        help="assert finite values in the tensor engine")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--out", help="output (run) directory")
    return parser


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="dataset directory")
    parser.add_argument("--kind", choices=INPUT_KINDS, help="network input data type")
    parser.add_argument("--epochs", dest="train.epochs", type=int)
    parser.add_argument("--batch-size", dest="train.batch_size", type=int)
    parser.add_argument("--patience", dest="train.patience", type=int)
    parser.add_argument("--learning-rate", dest="train.learning_rate", type=float)
    parser.add_argument("--no-augment", dest="augment", action="store_const", const=False,
                        help="train without horizontally flipped copies")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="spadvision",
        description="Simulate dToF SPAD frames, train segmentation networks and compare input data types.",
        epilog="Exit codes: 0 ok, 1 other error, 2 config, 3 dataset/IO, 4 training, 5 evaluation, 6 benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a labelled dataset")
    p.add_argument("--frames", dest="n_frames", type=int, help="train + validation frames")
    p.add_argument("--test-frames", dest="n_test", type=int, help="test frames")
    p.add_argument("--sbr-target", type=float, help="fixed expected SBR for every frame")
    p.add_argument("--moving", action="store_const", const=True, help="moving-object sequence instead of random scenes")
    p.add_argument("--split-backdrop", action="store_const", const=True,
                   help="test frames use a different backdrop depth range")

    p = sub.add_parser("train", parents=[common], help="train a network on one input kind")
    _add_training_flags(p)

    p = sub.add_parser("predict", parents=[common], help="write predicted masks and PPM images")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="checkpoint directory")
    p.add_argument("--kind", choices=INPUT_KINDS, help="expected input kind of the checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--ids", type=int, nargs="+", help="explicit frame ids")

    p = sub.add_parser("evaluate", parents=[common], help="detection metrics of a model, N trained runs or an oracle")
    _add_training_flags(p)
    p.add_argument("--checkpoint", help="evaluate an existing checkpoint")
    p.add_argument("--runs", type=int, help="train and evaluate N seeds")
    p.add_argument("--oracle", action="store_const", const=True, help="feed ground truth as the prediction")
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--split", choices=("train", "val", "test"))

    p = sub.add_parser("compare", parents=[common], help="t-test and paired-failure reports between kinds")
    p.add_argument("inputs", nargs="+", help="evaluate output directories")
    p.add_argument("--alpha", type=float, help="significance level")

    p = sub.add_parser("bench", parents=[common], help="throughput of the depth chain and of inference")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="benchmark this model instead of untrained ones")
    p.add_argument("--frames", type=int, help="timed frames")
    p.add_argument("--warmup", type=int, help="untimed warmup frames")
    p.add_argument("--repeats", type=int)
    p.add_argument("--kinds", nargs="+", choices=INPUT_KINDS)
    return parser


_CONTROL_FLAGS = ("command", "verbose", "quiet", "config")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    flags = {key: value for key, value in vars(args).items() if key not in _CONTROL_FLAGS}
    file_values = load_config(args.config) if args.config is not None else None
    return RunConfig.resolve(args.command, DEFAULTS[args.command], file_values, flags)


def _setup_logging(args: argparse.Namespace, run_dir: Optional[Path]) -> List[logging.Handler]:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    formatter = logging.Formatter("%(asctime)s %(levelname)-7s %(name)s: %(message)s")
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(run_dir / "run.log", encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(level)
    return handlers


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers: List[logging.Handler] = []
    try:
        cfg = resolve_config(args)
        run_dir = Path(cfg["out"]) if cfg.get("out") else None
        handlers = _setup_logging(args, run_dir)
        Config(worker_count=cfg.get("workers") or None, chunk_size=cfg.get("chunk_size"),
               debug_checks=cfg.get("debug_checks")).apply()
        if run_dir is not None:
            cfg.write(run_dir)
        logger.debug("Resolved %r", cfg)
        COMMANDS[args.command](cfg)
        return EXIT_OK
    except (SpadVisionError, OSError) as exc:
        code = exit_code_for(exc)
        if handlers:
            logger.error("%s failed: %s", args.command, exc)
        else:
            print(f"spadvision {args.command}: {exc}", file=sys.stderr)
        return code
    finally:
        for handler in handlers:
            logger.removeHandler(handler)
            handler.close()


__all__ = ["DEFAULTS", "COMMANDS", "build_parser", "resolve_config", "exit_code_for", "main"]
