"""End-to-end experiment steps shared by the CLI and scripted runs.

Every step is a deterministic function of the config and of files written by
earlier steps.
"""

from __future__ import annotations

import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .config import ConfigError, ExperimentConfig
from .dataset import (
    ChannelBuilder,
    Placement,
    PlacementSpec,
    Recipe,
    SplitPlan,
    build_arrays,
    check_unseen_disjoint,
    climatology,
    extrapolation_split,
    fit_recipe_normalizer,
    gaussian_blur,
    pair_indices,
    partitioned_split,
    placement_suite,
    synth_chaotic,
    synth_cyclical,
    synth_land_mask,
    valid_pixels,
)
from .dataset.placement import read_stations
from .grid import ChannelKind, ScalarField, export_pgm, read_field, write_field
from .model import ConvNet, TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .normalization import TARGET, Normalizer

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
LAND_FILE = "land.sfr"


class DataError(RuntimeError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FIELD_RECON_THREADS", "1")))
    except ValueError:
        return 1


def frame_name(i: int) -> str:
    return f"frame_{i:05d}.sfr"


# --- datasets -----------------------------------------------------------------


def synthesize(cfg: ExperimentConfig):
    """Frames and optional land mask described by the config."""
    geom = cfg.geometry_obj()
    land = synth_land_mask(cfg.height, cfg.width, cfg.data_seed, cfg.land_fraction) if cfg.synth_land else None
    if cfg.synth_kind == "cyclical":
        frames = synth_cyclical(cfg.height, cfg.width, cfg.frames, cfg.cycle_len, cfg.synth_mode, cfg.data_seed, geom)
    else:
        frames = synth_chaotic(cfg.height, cfg.width, cfg.frames, cfg.data_seed)
    if cfg.blur_sigma > 0:
        frames = [gaussian_blur(ScalarField(f.values, geometry=geom), cfg.blur_sigma) for f in frames]
    frames = [ScalarField(f.values, land, geom) for f in frames]
    return frames, land


def write_dataset(cfg: ExperimentConfig, out_dir, force=False) -> Path:
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise ConfigError(f"{out_dir} exists and is not empty (use --force)")
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, land = synthesize(cfg)
    for i, f in enumerate(frames):
        write_field(ScalarField(f.values, geometry=f.geometry), out_dir / frame_name(i))
    if land is not None:
        write_field(ScalarField(np.ones(land.shape), land), out_dir / LAND_FILE)
    manifest = {
        "frames": len(frames),
        "height": cfg.height,
        "width": cfg.width,
        "cycle_len": cfg.cycle_len if cfg.synth_kind == "cyclical" else 0,
        "kind": cfg.synth_kind,
        "mode": cfg.synth_mode if cfg.synth_kind == "cyclical" else "",
        "data_seed": cfg.data_seed,
        "blur_sigma": cfg.blur_sigma,
        "geometry": cfg.geometry,
        "land": LAND_FILE if land is not None else "",
    }
    (out_dir / MANIFEST).write_text("".join(f"{k}={v}\n" for k, v in manifest.items()))
    return out_dir


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise DataError(f"no manifest in {data_dir}")
    return dict(line.split("=", 1) for line in path.read_text().splitlines() if "=" in line)


def load_dataset(cfg: ExperimentConfig, data_dir):
    """Frames (with the land mask attached) and the land mask, from a frame directory."""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    geom = cfg.geometry_obj()
    land = None
    land_path = cfg.path(cfg.land, "") if cfg.land else (data_dir / manifest["land"] if manifest.get("land") else None)
    if land_path is not None:
        lf = read_field(land_path)
        land = lf.valid_mask if lf.valid_mask is not None else lf.values.astype(np.uint8)
    n = int(manifest["frames"])
    frames = []
    for i in range(n):
        f = read_field(data_dir / frame_name(i), geom)
        if land is not None and f.shape != land.shape:
            raise DataError(f"frame {i} shape {f.shape} != land mask shape {land.shape}")
        if frames and f.shape != frames[0].shape:
            raise DataError(f"frame {i} shape {f.shape} differs from frame 0 {frames[0].shape}")
        frames.append(ScalarField(f.values, land, geom))
    if not frames:
        raise DataError(f"{data_dir} holds no frames")
    return frames, land


# --- splits and placements ----------------------------------------------------


def make_split(cfg: ExperimentConfig, n_frames: int) -> SplitPlan:
    if cfg.split_scheme == "partitioned":
        return partitioned_split(n_frames, cfg.effective_chunk_len, cfg.ratios, cfg.split_seed)
    return extrapolation_split(n_frames, cfg.train_fraction)


def candidate_pixels(cfg: ExperimentConfig, shape, land=None):
    if cfg.placement_mode == "fixed_subset":
        if not cfg.stations:
            raise ConfigError("fixed_subset placement needs a stations file")
        return read_stations(cfg.path(cfg.stations, ""))
    return valid_pixels(shape, land)


def placements(cfg: ExperimentConfig, shape, land=None):
    """(training placements, unseen placements)."""
    cands = candidate_pixels(cfg, shape, land)
    train_spec = PlacementSpec(cfg.train_counts, cfg.train_seeds, cfg.placement_mode)
    seen = placement_suite(train_spec, cands)
    unseen = []
    if cfg.unseen_counts and cfg.unseen_seeds:
        unseen_spec = PlacementSpec(cfg.unseen_counts, cfg.unseen_seeds, cfg.placement_mode)
        check_unseen_disjoint(train_spec, unseen_spec)
        unseen = placement_suite(unseen_spec, cands)
    return seen, unseen


def recipe_of(cfg: ExperimentConfig) -> Recipe:
    return Recipe.parse(cfg.recipe, normalized=cfg.normalize, masked_loss=cfg.masked_loss, mask_voronoi=cfg.mask_voronoi)


# --- training -----------------------------------------------------------------


@dataclass
class Prepared:
    cfg: ExperimentConfig
    frames: list
    land: Optional[np.ndarray]
    split: SplitPlan
    recipe: Recipe
    builder: ChannelBuilder
    seen: list
    unseen: list


def prepare(cfg: ExperimentConfig, frames, land, split: SplitPlan) -> Prepared:
    recipe = recipe_of(cfg)
    clim = climatology([frames[i] for i in split.train]) if ChannelKind.FILLED_SPARSE in recipe.kinds else None
    builder = ChannelBuilder(cfg.geometry_obj(), frames[0].shape, land, clim)
    seen, unseen = placements(cfg, frames[0].shape, land)
    return Prepared(cfg, frames, land, split, recipe, builder, seen, unseen)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        max_epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        init_seed=cfg.init_seed,
        masked_loss=cfg.masked_loss,
        samples_per_epoch=cfg.samples_per_epoch,
    )


def train_prepared(p: Prepared, callback=None):
    """Fit the normalizer and network; return (net, normalizer, history)."""
    cfg = p.cfg
    n_pl = len(p.seen)
    train_pairs = pair_indices(p.split.train, n_pl, cfg.pairing, cfg.split_seed)
    val_pairs = pair_indices(p.split.val, n_pl, cfg.pairing, cfg.split_seed + 1)
    if not val_pairs:
        raise ConfigError("validation split is empty")
    normalizer = fit_recipe_normalizer(p.frames, p.seen, p.recipe, p.builder, train_pairs)
    train_data = build_arrays(p.frames, p.seen, train_pairs, p.recipe, normalizer, p.builder)
    val_data = build_arrays(p.frames, p.seen, val_pairs, p.recipe, normalizer, p.builder)
    net = ConvNet.build(len(p.recipe.kinds), cfg.hidden, cfg.depth, cfg.kernel, cfg.init_seed)
    net, history = train(net, train_data, val_data, train_config(cfg), callback)
    return net, normalizer, history


def checkpoint_meta(cfg: ExperimentConfig, normalizer: Normalizer, history) -> dict:
    meta = {
        "experiment": cfg.name,
        "recipe": cfg.recipe,
        "normalize": str(cfg.normalize).lower(),
        "masked_loss": str(cfg.masked_loss).lower(),
        "mask_voronoi": str(cfg.mask_voronoi).lower(),
        "normalizer": "normalizer.txt",
        "epochs": cfg.epochs,
        "learning_rate": repr(cfg.learning_rate),
        "batch_size": cfg.batch_size,
        "init_seed": cfg.init_seed,
        "samples_per_epoch": cfg.samples_per_epoch,
        "best_epoch": history.best_epoch if history.best_epoch is not None else "",
    }
    return meta


def save_training(out_dir, cfg, net, normalizer, history) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", net, checkpoint_meta(cfg, normalizer, history))
    normalizer.save(out_dir / "normalizer.txt")
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{i},{t!r},{v!r}" for i, (t, v) in enumerate(zip(history.train_loss, history.val_loss))]
    (out_dir / "history.csv").write_text("\n".join(lines) + "\n")


def load_training(out_dir):
    out_dir = Path(out_dir)
    net, meta = load_checkpoint(out_dir / "model.ckpt")
    normalizer = Normalizer.load(out_dir / meta.get("normalizer", "normalizer.txt"))
    return net, normalizer, meta


# --- evaluation ---------------------------------------------------------------


def predict_physical(p: Prepared, net: ConvNet, normalizer: Normalizer, frame_ids, placement: Placement):
    """Denormalized predictions (N, H, W) for ``frame_ids`` under one placement."""
    pairs = [(f, 0) for f in frame_ids]
    x, _, _ = build_arrays(p.frames, [placement], pairs, p.recipe, normalizer, p.builder)
    scale = normalizer.scale(TARGET) if p.recipe.normalized else 1.0
    return predict(net, x) * scale


def evaluate(p: Prepared, net: ConvNet, normalizer: Normalizer, frame_ids=None, maps_dir=None):
    """Error records for the seen and unseen placement suites.

    Each record is the mean over evaluation frames for one placement.
    Metrics use physical units and skip masked-out pixels.
    """
    cfg = p.cfg
    if frame_ids is None:
        frame_ids = p.split.val if cfg.eval_split == "val" else p.split.test
    if not frame_ids:
        raise ConfigError(f"{cfg.eval_split} split is empty")
    records = []
    avg_pairs: dict = {}
    for split_name, suite in (("seen", p.seen), ("unseen", p.unseen)):
        for pl in suite:
            preds = predict_physical(p, net, normalizer, frame_ids, pl)
            rel, rms = [], []
            for fid, pred in zip(frame_ids, preds):
                truth = p.frames[fid]
                rel.append(metrics.relative_l2(truth, pred, p.land))
                rms.append(metrics.rmse(truth, pred, p.land))
                avg_pairs.setdefault(split_name, []).append((truth.values, pred))
            records.append(metrics.ErrorRecord(cfg.name, pl.count, split_name, pl.seed, "relative_l2", float(np.mean(rel))))
            records.append(metrics.ErrorRecord(cfg.name, pl.count, split_name, pl.seed, "rmse", float(np.mean(rms))))
            if maps_dir is not None:
                _write_example_map(cfg, maps_dir, split_name, pl, p.frames[frame_ids[0]], preds[0], p.land)
    if maps_dir is not None:
        for split_name, pairs in avg_pairs.items():
            avg = metrics.average_error_map(pairs)
            hi = float(avg.values.max()) or 1.0
            export_pgm(ScalarField(avg.values, p.land), Path(maps_dir) / f"{split_name}_average_error.pgm", 0.0, hi)
    return records


def _write_example_map(cfg, maps_dir, split_name, pl, truth, pred, land):
    maps_dir = Path(maps_dir)
    maps_dir.mkdir(parents=True, exist_ok=True)
    err = metrics.error_map(truth, pred).values
    cap = cfg.map_cap if cfg.map_cap > 0 else max(float(err.max()), 1e-12)
    scaled = metrics.scaled_error_map(truth, pred, cap, cfg.map_gamma)
    export_pgm(ScalarField(scaled.values, land), maps_dir / f"{split_name}_{pl.key}_error.pgm", 0.0, 1.0)


def report_rows(p: Prepared, records):
    rows = metrics.aggregate_table(records, expected_seeds=None)
    splits = {"seen": sorted({pl.count for pl in p.seen}), "unseen": sorted({pl.count for pl in p.unseen})}
    missing = metrics.missing_cells(rows, [p.cfg.name], splits, ["relative_l2", "rmse"])
    if missing:
        raise DataError(f"report is missing cells: {missing}")
    return rows


def seen_relative_l2(p: Prepared, net, normalizer, frame_ids) -> float:
    """Mean relative L2 over the training placements on ``frame_ids``."""
    vals = []
    for pl in p.seen:
        preds = predict_physical(p, net, normalizer, frame_ids, pl)
        vals += [metrics.relative_l2(p.frames[f], pr, p.land) for f, pr in zip(frame_ids, preds)]
    return float(np.mean(vals))


# --- mask export --------------------------------------------------------------


def export_masks(p: Prepared, out_dir, frame_ids=None) -> list[Path]:
    """Write each recipe channel for every (frame, training placement) as SFR1 files."""
    out_dir = Path(out_dir)
    if frame_ids is None:
        frame_ids = range(len(p.frames)) if not p.cfg.mask_frames else range(min(p.cfg.mask_frames, len(p.frames)))
    frame_ids = list(frame_ids)
    jobs = [(pl, fid) for pl in p.seen for fid in frame_ids]
    # warm the caches serially so worker threads only read them
    for pl in p.seen:
        p.builder.raw_channels(p.frames[0], pl.sensors, p.recipe)

    def work(job):
        pl, fid = job
        d = out_dir / pl.key
        d.mkdir(parents=True, exist_ok=True)
        written = []
        raw = p.builder.raw_channels(p.frames[fid], pl.sensors, p.recipe)
        for kind, ch in zip(p.recipe.kinds, raw):
            path = d / f"frame_{fid:05d}_{kind.value}.sfr"
            write_field(ScalarField(ch.values), path)
            written.append(path)
        return written

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(work, jobs))
    return [path for group in results for path in group]
