"""Batch front end: ``fieldrecon <command> --config exp.cfg --out run/``.

Layout of an experiment directory (``--out``, default: next to the config)::

    data/           SFR1 frames + manifest.txt          (synth)
    masks/          input channels per placement         (masks)
    split.txt       frame split                           (split)
    model/          model.ckpt, normalizer.txt, history   (train)
    report.csv      aggregate error table                 (eval)
    maps/           PGM error maps                        (eval)

Each command reads only files written by earlier ones.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from . import metrics
from . import pipeline as pl
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import RecipeError, SplitPlan
from .grid import FieldFormatError
from .model import TrainingDivergedError, corrupted_gradients, default_battery
from .model.checkpoint import CheckpointError

log = logging.getLogger("fieldrecon")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SPLIT_FILE = "split.txt"
MODEL_DIR = "model"
REPORT_FILE = "report.csv"


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else cfg.base_dir


def _claim(path: Path, force: bool) -> None:
    """Refuse to clobber existing output unless forced."""
    if path.is_dir() and any(path.iterdir()) or path.is_file():
        if not force:
            raise ConfigError(f"{path} already exists (use --force to overwrite)")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()


def _data_dir(cfg: ExperimentConfig, out: Path) -> Path:
    return cfg.path(cfg.data, out / "data")


def _load_split(out: Path) -> SplitPlan:
    path = out / SPLIT_FILE
    if not path.exists():
        raise pl.DataError(f"missing {path}; run the split command first")
    return SplitPlan.load(path)


def _prepared(cfg, out: Path, need_split=True):
    frames, land = pl.load_dataset(cfg, _data_dir(cfg, out))
    if need_split or (out / SPLIT_FILE).exists():
        split = _load_split(out)
    else:
        split = pl.make_split(cfg, len(frames))
    if split.n_frames != len(frames):
        raise pl.DataError(f"split covers {split.n_frames} frames but the dataset has {len(frames)}")
    return pl.prepare(cfg, frames, land, split)


def cmd_synth(cfg, out: Path, force: bool) -> int:
    data = _data_dir(cfg, out)
    if data.exists() and any(data.iterdir()) and not force:
        raise ConfigError(f"{data} exists and is not empty (use --force)")
    pl.write_dataset(cfg, data, force=force)
    print(f"wrote {cfg.frames} frames to {data}")
    return EXIT_OK


def cmd_masks(cfg, out: Path, force: bool) -> int:
    pl.recipe_of(cfg)  # reject conflicting recipes before touching any data
    p = _prepared(cfg, out, need_split=False)
    target = out / "masks"
    _claim(target, force)
    written = pl.export_masks(p, target)
    print(f"wrote {len(written)} channel files for {len(p.seen)} placements to {target}")
    return EXIT_OK


def cmd_split(cfg, out: Path, force: bool) -> int:
    frames, _ = pl.load_dataset(cfg, _data_dir(cfg, out))
    plan = pl.make_split(cfg, len(frames))
    target = out / SPLIT_FILE
    _claim(target, force)
    plan.save(target)
    print(f"{plan.scheme} split: train {len(plan.train)}, val {len(plan.val)}, test {len(plan.test)} -> {target}")
    return EXIT_OK


def cmd_train(cfg, out: Path, force: bool) -> int:
    p = _prepared(cfg, out)
    target = out / MODEL_DIR
    _claim(target, force)
    net, normalizer, history = pl.train_prepared(p)
    pl.save_training(target, cfg, net, normalizer, history)
    print(f"trained {len(history)} epochs, best epoch {history.best_epoch}, -> {target}")
    return EXIT_OK


def cmd_eval(cfg, out: Path, force: bool) -> int:
    p = _prepared(cfg, out)
    model_dir = out / MODEL_DIR
    if not (model_dir / "model.ckpt").exists():
        raise pl.DataError(f"missing {model_dir / 'model.ckpt'}; run the train command first")
    net, normalizer, _ = pl.load_training(model_dir)
    if net.in_channels != len(p.recipe.kinds):
        raise pl.DataError(f"checkpoint expects {net.in_channels} channels, recipe has {len(p.recipe.kinds)}")
    report, maps = out / REPORT_FILE, out / "maps"
    _claim(report, force)
    _claim(maps, force)
    records = pl.evaluate(p, net, normalizer, maps_dir=maps)
    rows = pl.report_rows(p, records)
    report.write_text(metrics.table_csv(rows))
    print(f"wrote {len(rows)} rows to {report}")
    return EXIT_OK


def cmd_gradcheck(tolerance: float, corrupt: bool) -> int:
    results = default_battery(tolerance, grad_fn=corrupted_gradients() if corrupt else None)
    ok = True
    for name, rep in results:
        status = "ok" if rep.passed else "FAIL"
        print(f"{name:24s} max_rel_error={rep.max_rel_error:.3e} checked={rep.n_checked} {status}")
        ok &= rep.passed
    print("gradcheck passed" if ok else "gradcheck FAILED")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"synth": cmd_synth, "masks": cmd_masks, "split": cmd_split, "train": cmd_train, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldrecon", description="Sparse-sensor field reconstruction experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="key=value experiment config")
        sp.add_argument("--out", help="experiment directory (default: the config's directory)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
    gc = sub.add_parser("gradcheck")
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.add_argument("--corrupt", action="store_true", help="negative control: perturb analytic gradients")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.tolerance, args.corrupt)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, _out_dir(args, cfg), args.force)
    except (ConfigError, RecipeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pl.DataError, FieldFormatError, CheckpointError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid content that got past the format readers (bad sensors, degenerate fields)
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
