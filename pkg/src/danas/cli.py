"""Command-line surface: search, train, eval, report, gradcheck,
synth-data, prepare-data.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Configs
are validated completely before any side effect; flags override the
config file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .archspace import Genotype
from .dataspace import DataConfig
from .engine import (ConfigError, DataError, RunError, build_manifest,
                     load_config, run_search, train_final)
from .engine.data import FeatureCache, load_scramble
from .engine.rundir import (CONFIG_FILE, GENOTYPE_FILE, METRICS_FILE,
                            MODEL_FILE, RunDirectory)
from .engine.config import config_from_dict
from .engine.train import evaluate
from .engine.search import prepare_manifest
from .gradpaths import run_all_checks
from .report import format_table, generate_report
from .synth import DEFAULT_INFORMATIVE, DEFAULT_SYNTH_SPACE, generate_dataset


def _parse_triple(text: str) -> list[int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected window,hop,mels - got {text!r}")
    return [int(p) for p in parts]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _parse_space(text: str) -> list[list[int]]:
    return [_parse_triple(part) for part in text.split(";") if part]


_SEARCH_OVERRIDES = (
    ("seed", "seed"),
    ("data_aware", "data_aware"),
    ("fixed_config", "fixed_config"),
    ("alignment", "alignment"),
    ("warmup_epochs", "warmup_epochs"),
    ("search_epochs", "search_epochs"),
    ("eval_epochs", "eval_epochs"),
    ("batch_size", "batch_size"),
    ("eta_w", "eta_w"),
    ("eta_arch", "eta_arch"),
    ("dataset_root", "dataset.root"),
    ("dataset_task", "dataset.task"),
    ("op_set", "model.op_set"),
    ("cells", "model.cells"),
    ("nodes", "model.nodes"),
    ("channels", "model.channels"),
    ("stem_multiplier", "model.stem_multiplier"),
    ("space", "space"),
)


def _collect_overrides(args) -> dict:
    overrides = {}
    for attr, key in _SEARCH_OVERRIDES:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return overrides


def cmd_search(args) -> int:
    cfg = load_config(args.config, _collect_overrides(args))
    result = run_search(cfg, args.out)
    print(f"search complete: {args.out}")
    print(f"  selected config: {result.selected_config.key}")
    print(f"  early stop epoch: {result.early_stop_epoch}")
    print(f"  genotype: {result.run_dir}/{GENOTYPE_FILE}")
    return 0


def _load_run_config(run_dir: Path):
    config_path = run_dir / CONFIG_FILE
    if not config_path.is_file():
        raise ConfigError(f"{run_dir} has no {CONFIG_FILE}; run search first")
    return config_from_dict(json.loads(config_path.read_text()))


def cmd_train(args) -> int:
    run_dir = Path(args.run)
    cfg = _load_run_config(run_dir)
    if args.eval_epochs is not None:
        cfg.eval_epochs = args.eval_epochs
    genotype_path = run_dir / GENOTYPE_FILE
    metrics_path = run_dir / METRICS_FILE
    for path in (genotype_path, metrics_path):
        if not path.is_file():
            raise RunError(f"incomplete run directory: missing {path.name}")
    genotype = Genotype.from_json(genotype_path.read_text())
    metrics = json.loads(metrics_path.read_text())
    selected = DataConfig(*metrics["search"]["selected_config"])

    with RunDirectory(run_dir) as rd:
        net, eval_metrics = train_final(genotype, selected, cfg)
        net.save(rd.file(MODEL_FILE))
        metrics["eval"] = {**eval_metrics.to_dict(),
                           "data_config": selected.as_list(),
                           "num_classes": net.num_classes}
        rd.write_json(METRICS_FILE, metrics)
        rd.logger().info("evaluation done: accuracy %.4f, %d params",
                         eval_metrics.accuracy, eval_metrics.parameter_count)
    print(f"trained {run_dir}/{MODEL_FILE}")
    print(f"  accuracy: {eval_metrics.accuracy:.4f}")
    print(f"  parameters: {eval_metrics.parameter_count}")
    return 0


def cmd_eval(args) -> int:
    from .archspace import DiscreteNetwork

    run_dir = Path(args.run)
    cfg = _load_run_config(run_dir)
    model_path = run_dir / MODEL_FILE
    if not model_path.is_file():
        raise RunError(f"{run_dir} has no {MODEL_FILE}; run train first")
    metrics = json.loads((run_dir / METRICS_FILE).read_text())
    selected = DataConfig(*metrics["search"]["selected_config"])
    net = DiscreteNetwork.load(model_path, dtype=cfg.dtype())
    manifest = prepare_manifest(cfg)
    cache = FeatureCache(manifest, [selected], dtype=cfg.dtype(),
                         scramble=load_scramble(manifest.root))
    if cfg.normalize_features:
        cache.normalize(manifest.split_indices("train"))
    accuracy, per_class = evaluate(net, cache, manifest,
                                   batch_size=cfg.batch_size)
    print(f"accuracy: {accuracy:.4f}")
    for name, value in per_class.items():
        print(f"  {name}: {value:.4f}")
    return 0


def cmd_report(args) -> int:
    out = generate_report(args.run, args.out)
    print(format_table(out["rows"]))
    for key in ("table", "gamma_csv", "gamma_figure", "loss_figure"):
        print(f"  wrote {out[key]}")
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.monotonic()
    results = run_all_checks(seed=args.seed, instances=args.instances)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:24s} max rel err {r.max_rel_err:10.3e}  {status}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed "
          f"in {time.monotonic() - t0:.1f}s")
    return 1 if failed else 0


def cmd_synth_data(args) -> int:
    configs = ([DataConfig(*c) for c in args.configs]
               if args.configs else DEFAULT_SYNTH_SPACE)
    informative = (DataConfig(*args.informative)
                   if args.informative else DEFAULT_INFORMATIVE)
    meta = generate_dataset(
        args.out, num_classes=args.classes,
        clips_per_class=args.clips_per_class, seed=args.seed,
        configs=configs, informative=informative,
        scramble_decoys=not args.no_scramble,
        val_fraction=args.val_fraction, test_fraction=args.test_fraction)
    print(f"wrote {meta['num_classes']} classes x "
          f"{meta['clips_per_class']} clips to {args.out}")
    print(f"  informative config: {informative.key}")
    return 0


def cmd_prepare_data(args) -> int:
    manifest = build_manifest(args.root, args.task)
    missing = [e.path for e in manifest.entries
               if not (manifest.root / e.path).is_file()]
    if missing:
        raise DataError(f"manifest references missing files: {missing[:5]}")
    payload = manifest.to_dict()
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    counts = {s: len(manifest.split_indices(s))
              for s in ("train", "validation", "testing")}
    print(f"wrote {args.out}: {len(manifest.entries)} entries, "
          f"{manifest.num_classes} classes, splits {counts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="danas",
        description="Joint gradient-based search over audio data "
                    "configurations and tiny cell-based architectures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the search phase")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--seed", type=int)
    p.add_argument("--data-aware", dest="data_aware", type=_parse_bool)
    p.add_argument("--fixed-config", dest="fixed_config", type=_parse_triple,
                   help="window,hop,mels used when --data-aware=false")
    p.add_argument("--alignment", choices=["zero_pad", "pre_process"])
    p.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    p.add_argument("--search-epochs", dest="search_epochs", type=int)
    p.add_argument("--eval-epochs", dest="eval_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--eta-w", dest="eta_w", type=float)
    p.add_argument("--eta-arch", dest="eta_arch", type=float)
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--dataset-task", dest="dataset_task",
                   choices=["folders", "all35", "names"])
    p.add_argument("--op-set", dest="op_set", choices=["darts8", "reduced4"])
    p.add_argument("--cells", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--stem-multiplier", dest="stem_multiplier", type=int)
    p.add_argument("--space", type=_parse_space,
                   help="semicolon-separated window,hop,mels triples")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train the discovered system from scratch")
    p.add_argument("--run", required=True, help="completed search run dir")
    p.add_argument("--eval-epochs", dest="eval_epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on the test split")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="emit metrics table, CSVs and figures")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="output directory (default RUN/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every gradient rule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth-data", help="generate the synthetic tone dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--clips-per-class", dest="clips_per_class", type=int,
                   default=80)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=_parse_space,
                   help="semicolon-separated window,hop,mels triples")
    p.add_argument("--informative", type=_parse_triple)
    p.add_argument("--no-scramble", dest="no_scramble", action="store_true",
                   help="keep decoy configs informative too")
    p.add_argument("--val-fraction", dest="val_fraction", type=float,
                   default=0.15)
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   default=0.2)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("prepare-data",
                       help="build a file->class,split manifest from a dataset tree")
    p.add_argument("--root", required=True)
    p.add_argument("--task", default="all35",
                   choices=["folders", "all35", "names"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
