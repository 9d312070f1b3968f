"""Acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from fieldrecon import pipeline as pl
from fieldrecon.cli import main as cli_main
from fieldrecon.config import parse_config
from fieldrecon.dataset import (
    ChannelBuilder,
    PlacementSpec,
    Recipe,
    assemble_sample,
    extrapolation_split,
    fit_recipe_normalizer,
    pair_indices,
    partitioned_split,
    placement_suite,
    synth_cyclical,
    valid_pixels,
)
from fieldrecon.geometry import EARTH_RADIUS_KM, GridGeometry, haversine, pixel_distance
from fieldrecon.grid import ScalarField, SensorSet
from fieldrecon.metrics import error_map, relative_l2, rmse
from fieldrecon.model import ConvNet, corrupted_gradients, grad_check, init_params, loss_and_grads, masked_mse
from fieldrecon.normalization import TARGET, denormalize, normalize
from fieldrecon.tessellation import distance_transform_by_replication, dt_sensor_mask, voronoi_fill
from oracles import brute_dt, brute_voronoi, chord_great_circle, haversine_literal
from test_tessellation import random_instance

KINDS = ("planar", "circular_x", "spherical")


def instances(seed, count, kinds=KINDS, max_side=32):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, kinds[i % len(kinds)], max_side=max_side, max_sensors=20) for i in range(count)]


@pytest.mark.criterion(1, "Voronoi equals brute-force nearest-sensor scan (200 instances, < 10 s)")
def test_criterion_01_voronoi_oracle():
    cases = instances(101, 200)
    t0 = time.perf_counter()
    fills = [voronoi_fill(g, s, shape=shape).values for g, shape, s in cases]
    elapsed = time.perf_counter() - t0
    for (g, shape, s), got in zip(cases, fills):
        scan = lambda p, q, g=g: pixel_distance(g, p, q)
        assert np.array_equal(got, np.array(brute_voronoi(g, shape, s.locations, s.values, scan)))
    assert elapsed < 10.0


@pytest.mark.criterion(2, "DT equals brute-force min distance within 1e-9, zero at sensors (< 10 s)")
def test_criterion_02_dt_oracle():
    cases = instances(202, 200)
    t0 = time.perf_counter()
    dts = [dt_sensor_mask(g, shape, s).values for g, shape, s in cases]
    elapsed = time.perf_counter() - t0
    for (g, shape, s), got in zip(cases, dts):
        ref = np.array(brute_dt(g, shape, s.locations))
        assert np.max(np.abs(got - ref)) <= 1e-9 * max(1.0, float(ref.max()))
        assert all(got[r, c] == 0.0 for r, c in s.locations)
    assert elapsed < 10.0


@pytest.mark.criterion(3, "wrap-aware DT equals triple-replication DT on 50 circular instances")
def test_criterion_03_circular_equivalence():
    for g, shape, s in instances(303, 50, kinds=("circular_x",)):
        direct = dt_sensor_mask(g, shape, s).values
        rep = distance_transform_by_replication(shape, s.locations).values
        assert np.max(np.abs(direct - rep)) <= 1e-9


@pytest.mark.criterion(4, "haversine: half circumference, symmetry/identity, chord oracle")
def test_criterion_04_haversine():
    r = EARTH_RADIUS_KM
    assert abs(haversine(0, 0, 0, 180, r) - math.pi * r) <= 1e-12 * math.pi * r
    rng = np.random.default_rng(404)
    for _ in range(1000):
        a, c = rng.uniform(-90, 90, 2)
        b, d = rng.uniform(-180, 180, 2)
        assert haversine(a, b, c, d) == haversine(c, d, a, b)
        assert haversine(a, b, a, b) == 0.0
        assert math.isclose(haversine(a, b, c, d), haversine_literal(a, b, c, d, r), rel_tol=1e-12, abs_tol=1e-9)
    ref = chord_great_circle(0, 0, 0, 90, r)
    assert abs(haversine(0, 0, 0, 90, r) - ref) <= 1e-9 * ref


@pytest.mark.criterion(5, "gradient check on random <= 3-layer nets, negative control detected (< 30 s)")
def test_criterion_05_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    for trial in range(6):
        depth = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 4)) for _ in range(depth)] + [1]
        kernels = [int(rng.choice([1, 3, 5])) for _ in range(depth)]
        net = ConvNet(init_params([(widths[i], widths[i + 1], kernels[i]) for i in range(depth)], seed=trial + 1))
        for layer in net.layers:
            layer.bias[:] = rng.normal(0, 0.1, layer.bias.shape)
        x = rng.normal(size=(2, widths[0], 8, 8))
        y = rng.normal(size=(2, 8, 8))
        for mask in (None, (rng.random((2, 8, 8)) < 0.5).astype(float)):
            rep = grad_check(net, x, y, mask, tolerance=1e-4, n_samples=60, seed=trial)
            assert rep.passed, rep
            bad = grad_check(net, x, y, mask, tolerance=1e-4, n_samples=60, seed=trial, grad_fn=corrupted_gradients())
            assert not bad.passed
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(6, "edits under loss_mask = 0 change neither loss nor gradients")
def test_criterion_06_masked_loss_invariance():
    rng = np.random.default_rng(606)
    mask = (rng.random((3, 8, 8)) < 0.5).astype(float)
    junk = 1e6 * rng.normal(size=(3, 8, 8))
    # targets edited under the mask: loss and every parameter gradient unchanged
    net = ConvNet(init_params([(2, 3, 3), (3, 3, 5), (3, 1, 3)], seed=6))
    x = rng.normal(size=(3, 2, 8, 8))
    y = rng.normal(size=(3, 8, 8))
    loss, grads = loss_and_grads(net, x, y, mask)
    loss2, grads2 = loss_and_grads(net, x, np.where(mask == 1, y, junk), mask)
    assert loss == loss2 and all(np.array_equal(a, b) for a, b in zip(grads, grads2))
    # predictions edited under the mask: a pointwise net passes its input through
    point = ConvNet(init_params([(1, 1, 1)], seed=7))
    xp = rng.normal(size=(3, 1, 8, 8))
    xq = np.where(mask[:, None] == 1, xp, junk[:, None])
    loss, grads = loss_and_grads(point, xp, y, mask)
    loss2, grads2 = loss_and_grads(point, xq, y, mask)
    assert loss == loss2 and all(np.array_equal(a, b) for a, b in zip(grads, grads2))
    pred = rng.normal(size=(3, 8, 8))
    assert masked_mse(pred, y, mask) == masked_mse(np.where(mask == 1, pred, junk), y, mask)


@pytest.mark.criterion(7, "normalized training pixels in [-1, 1], round trip, relative L2 invariance")
def test_criterion_07_normalization():
    frames = synth_cyclical(32, 32, 120, 20, seed=7)
    split = partitioned_split(120, 20, (0.6, 0.2, 0.2), seed=7)
    recipe = Recipe.parse("voronoi,dt_sensor")
    builder = ChannelBuilder(GridGeometry.planar(), (32, 32))
    suite = placement_suite(PlacementSpec((10, 20, 30, 50, 100), (1, 2, 100, 200, 300)), valid_pixels((32, 32)))
    pairs = pair_indices(split.train, len(suite), "rotate")
    norm = fit_recipe_normalizer(frames, suite, recipe, builder, pairs)
    for fi, pi in pairs:
        s = assemble_sample(frames[fi], suite[pi].sensors, recipe, norm, builder)
        assert np.abs(s.input_array()).max() <= 1 + 1e-12
        assert np.abs(s.target.values).max() <= 1 + 1e-12
    rng = np.random.default_rng(707)
    for fi in split.test:
        f = frames[fi]
        back = denormalize(normalize(f, norm, TARGET), norm, TARGET).values
        assert np.all(np.abs(back - f.values) <= 1e-6 * np.abs(f.values))
        pred = ScalarField(f.values + 0.1 * rng.normal(size=f.shape))
        a = relative_l2(f, pred)
        b = relative_l2(normalize(f, norm, TARGET), normalize(pred, norm, TARGET))
        assert abs(a - b) <= 1e-9


@pytest.mark.criterion(8, "partitioned split is a whole-chunk partition; 480-frame extrapolation split")
def test_criterion_08_splits():
    for n, chunk, seed in [(600, 50, 0), (480, 12, 3), (97, 10, 5), (1000, 7, 11), (50, 50, 1)]:
        plan = partitioned_split(n, chunk, (0.8, 0.1, 0.1), seed)
        assert sorted(plan.train + plan.val + plan.test) == list(range(n))
        for part in (plan.train, plan.val, plan.test):
            chunks = {f // chunk for f in part}
            assert sorted(part) == [f for c in sorted(chunks) for f in range(c * chunk, min(n, (c + 1) * chunk))]
    plan = extrapolation_split(480, 0.75)
    assert plan.fit_frames == tuple(range(0, 360))
    assert plan.test == tuple(range(360, 480))


@pytest.mark.criterion(9, "25 distinct training placements; 13 Antarctic fixed-subset masks")
def test_criterion_09_placements():
    suite = placement_suite(PlacementSpec((10, 20, 30, 50, 100), (1, 2, 100, 200, 300)), valid_pixels((64, 64)))
    assert len({frozenset(p.sensors.locations) for p in suite}) == 25
    # 65 known stations on the 1.5-degree polar ring grid (21 x 240)
    cands = valid_pixels((21, 240))
    stations = [cands[i] for i in sorted(np.random.default_rng(9).choice(len(cands), 65, replace=False))]
    antarctic = placement_suite(PlacementSpec((45, 50, 55, 60, 65), (1, 2, 3), "fixed_subset"), stations)
    assert len(antarctic) == 13


# --- directional training result ----------------------------------------------------------

DIRECTIONAL = """\
height=64
width=64
frames=600
cycle_len=50
synth_kind=cyclical
synth_mode=wake
ratios=0.6,0.2,0.2
pairing=random
train_counts=10,20,30,50,100
train_seeds=1,2,100,200,300
unseen_counts=
hidden=8
depth=3
kernel=5
epochs=50
learning_rate=3e-3
batch_size=32
samples_per_epoch=64
"""

RECIPES = {
    "normalized_dt": "recipe=voronoi,dt_sensor\nnormalize=true\n",
    "baseline_sparse": "recipe=voronoi,sparse_location\nnormalize=false\n",
    "voronoi_only": "recipe=voronoi\nnormalize=false\n",
}


def distinct_frames(frames, ids):
    """Drop frames identical to an earlier one; cyclical data repeats whole cycles."""
    keep, seen = [], []
    for i in ids:
        if not any(np.array_equal(frames[i].values, frames[j].values) for j in seen):
            keep.append(i)
            seen.append(i)
    return keep


def seen_val_error(data_seed, recipe_key):
    cfg = parse_config(DIRECTIONAL + RECIPES[recipe_key] + f"data_seed={data_seed}\n")
    frames, land = pl.synthesize(cfg)
    split = pl.make_split(cfg, len(frames))
    p = pl.prepare(cfg, frames, land, split)
    net, normalizer, _ = pl.train_prepared(p)
    # every validation chunk is a whole cycle, so the distinct frames carry the same mean
    return pl.seen_relative_l2(p, net, normalizer, distinct_frames(frames, split.val))


@pytest.mark.criterion(10, "normalized+DT <= sparse baseline in >= 2/3 seeds; both beat Voronoi-only (< 15 min)")
def test_criterion_10_directional_training():
    t0 = time.perf_counter()
    results = {}
    for seed in (0, 1, 2):
        for key in RECIPES:
            results[seed, key] = seen_val_error(seed, key)
            print(f"data seed {seed} {key:16s} seen-sensor val relative L2 {results[seed, key]:.4f}")
    elapsed = time.perf_counter() - t0
    print(f"elapsed {elapsed:.0f} s")
    wins = sum(results[s, "normalized_dt"] <= results[s, "baseline_sparse"] for s in (0, 1, 2))
    assert wins >= 2
    for s in (0, 1, 2):
        assert results[s, "normalized_dt"] < results[s, "voronoi_only"]
        assert results[s, "baseline_sparse"] < results[s, "voronoi_only"]
    assert elapsed <= 15 * 60


@pytest.mark.criterion(11, "metric identities hold exactly")
def test_criterion_11_metric_identities():
    rng = np.random.default_rng(1111)
    t = rng.normal(size=(9, 7))
    assert relative_l2(t, np.zeros_like(t)) == 1.0
    assert relative_l2(t, 2 * t) == 1.0
    assert rmse(np.full((4, 4), 1.25), np.full((4, 4), 1.75)) == 0.5
    p = rng.normal(size=(9, 7))
    assert np.mean(error_map(t, p).values) == np.mean((t - p) ** 2)
    assert masked_mse(p, t, np.ones_like(t)) == np.sum((p - t) ** 2) / t.size


TINY = """\
name=determinism
height=16
width=24
frames=60
cycle_len=10
geometry=circular_x
synth_land=true
recipe=voronoi,dt_sensor,land_mask,dt_land
masked_loss=true
train_counts=4,6
train_seeds=1,2
unseen_counts=5
unseen_seeds=7,11
pairing=rotate
hidden=4
depth=2
kernel=3
epochs=2
learning_rate=1e-2
batch_size=8
mask_frames=3
"""


@pytest.mark.criterion(12, "two pipeline runs give byte-identical SFR1, checkpoint and CSV outputs")
def test_criterion_12_determinism(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(TINY)
    for run in ("a", "b"):
        for cmd in ("synth", "masks", "split", "train", "eval"):
            assert cli_main([cmd, "--config", str(cfg), "--out", str(tmp_path / run)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    suffixes = {f.suffix for f in files}
    assert {".sfr", ".ckpt", ".csv"} <= suffixes
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
