"""Flat ``key=value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Relative paths are resolved against the directory holding the config file.

Recognised keys (defaults in parentheses):

dataset
    synth_kind (cyclical) | chaotic; synth_mode (wake) | seasonal;
    height (64), width (64), frames (600), cycle_len (50), data_seed (0),
    blur_sigma (0), synth_land (false), land_fraction (0.3)
    data: frame directory (<out>/data); land: SFR1 validity-mask file
geometry
    geometry (planar) | circular_x | spherical; lat0, dlat, lon0, dlon, radius (6371)
inputs
    recipe (voronoi,dt_sensor); normalize (true); masked_loss (false); mask_voronoi (false)
placements
    placement_mode (free) | fixed_subset; stations: station list file;
    train_counts (10,20,30,50,100); train_seeds (1,2,100,200,300);
    unseen_counts (10,50,70,100,200); unseen_seeds (7,11,13,17,19);
    pairing (all) | rotate | random
split
    split_scheme (partitioned) | extrapolation; chunk_len (cycle_len);
    ratios (0.8,0.1,0.1); split_seed (0); train_fraction (0.75)
model and training
    hidden (48), depth (8), kernel (7), epochs (300), learning_rate (1e-4),
    batch_size (32), init_seed (1)
evaluation
    eval_split (test) | val; map_cap (0 = auto); map_gamma (0.5); mask_frames (all)
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataset.placement import UNSEEN_SEEDS
from .geometry import EARTH_RADIUS_KM, GridGeometry


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    base_dir: Path = field(default=Path("."), compare=False)
    # dataset
    synth_kind: str = "cyclical"
    synth_mode: str = "wake"
    height: int = 64
    width: int = 64
    frames: int = 600
    cycle_len: int = 50
    data_seed: int = 0
    blur_sigma: float = 0.0
    synth_land: bool = False
    land_fraction: float = 0.3
    data: str = ""
    land: str = ""
    # geometry
    geometry: str = "planar"
    lat0: float = 0.0
    dlat: float = 1.0
    lon0: float = 0.0
    dlon: float = 1.0
    radius: float = EARTH_RADIUS_KM
    # inputs
    recipe: str = "voronoi,dt_sensor"
    normalize: bool = True
    masked_loss: bool = False
    mask_voronoi: bool = False
    # placements
    placement_mode: str = "free"
    stations: str = ""
    train_counts: tuple[int, ...] = (10, 20, 30, 50, 100)
    train_seeds: tuple[int, ...] = (1, 2, 100, 200, 300)
    unseen_counts: tuple[int, ...] = (10, 50, 70, 100, 200)
    unseen_seeds: tuple[int, ...] = UNSEEN_SEEDS
    pairing: str = "all"
    # split
    split_scheme: str = "partitioned"
    chunk_len: int = 0
    ratios: tuple[float, ...] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    train_fraction: float = 0.75
    # model
    hidden: int = 48
    depth: int = 8
    kernel: int = 7
    epochs: int = 300
    learning_rate: float = 1e-4
    batch_size: int = 32
    init_seed: int = 1
    samples_per_epoch: int = 0
    # evaluation
    eval_split: str = "test"
    map_cap: float = 0.0
    map_gamma: float = 0.5
    mask_frames: int = 0

    def geometry_obj(self) -> GridGeometry:
        if self.geometry == "planar":
            return GridGeometry.planar()
        if self.geometry == "circular_x":
            return GridGeometry.circular(self.width)
        if self.geometry == "spherical":
            return GridGeometry.spherical(self.lat0, self.dlat, self.lon0, self.dlon, self.radius)
        raise ConfigError(f"unknown geometry {self.geometry!r}")

    @property
    def effective_chunk_len(self) -> int:
        return self.chunk_len or self.cycle_len

    def path(self, value: str, default: str | Path) -> Path:
        p = Path(value) if value else Path(default)
        return p if p.is_absolute() else self.base_dir / p


def _parser_for(f):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    if t.startswith("tuple[int"):
        return _ints
    if t.startswith("tuple[float"):
        return _floats
    return {"int": int, "float": float, "bool": _bool, "str": str}.get(t)


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig) if f.name != "base_dir"}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser = _parser_for(known[key])
        try:
            values[key] = parser(val)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    cfg = ExperimentConfig(base_dir=Path(base_dir), **values)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def _validate(cfg: ExperimentConfig) -> None:
    checks = [
        (cfg.synth_kind in ("cyclical", "chaotic"), "synth_kind must be cyclical or chaotic"),
        (cfg.synth_mode in ("wake", "seasonal"), "synth_mode must be wake or seasonal"),
        (cfg.height > 0 and cfg.width > 0 and cfg.frames > 0, "grid size and frame count must be positive"),
        (cfg.placement_mode in ("free", "fixed_subset"), "placement_mode must be free or fixed_subset"),
        (cfg.pairing in ("all", "rotate", "random"), "pairing must be all, rotate or random"),
        (cfg.split_scheme in ("partitioned", "extrapolation"), "split_scheme must be partitioned or extrapolation"),
        (cfg.eval_split in ("test", "val"), "eval_split must be test or val"),
        (len(cfg.ratios) == 3, "ratios needs three values"),
        (cfg.depth >= 1 and cfg.kernel % 2 == 1 and cfg.hidden >= 1, "depth >= 1, odd kernel, hidden >= 1 required"),
        (cfg.epochs >= 0 and cfg.batch_size >= 1 and cfg.learning_rate > 0 and cfg.samples_per_epoch >= 0, "bad training hyperparameters"),
        (cfg.blur_sigma >= 0, "blur_sigma must be non-negative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    try:
        cfg.geometry_obj()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: ExperimentConfig) -> str:
    """Render a config back to key=value text."""
    out = []
    for f in fields(cfg):
        if f.name == "base_dir":
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{f.name}={v}")
    return "\n".join(out) + "\n"
