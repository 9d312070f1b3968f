import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldrecon.dataset import (
    ChannelBuilder,
    Placement,
    PlacementSpec,
    Prng,
    Recipe,
    RecipeError,
    SplitPlan,
    assemble_sample,
    build_arrays,
    check_unseen_disjoint,
    climatology,
    extrapolation_split,
    fit_recipe_normalizer,
    gaussian_blur,
    pair_indices,
    partitioned_split,
    place_sensors,
    placement_suite,
    prng_next,
    synth_chaotic,
    synth_cyclical,
    synth_land_mask,
    valid_pixels,
)
from fieldrecon.dataset.placement import read_stations, splitmix64_block, write_stations
from fieldrecon.dataset.synth import gaussian_kernel
from fieldrecon.geometry import GridGeometry
from fieldrecon.grid import ChannelKind, ScalarField, SensorSet
from fieldrecon.normalization import TARGET
from oracles import splitmix64_reference

TRAIN_COUNTS = (10, 20, 30, 50, 100)
TRAIN_SEEDS = (1, 2, 100, 200, 300)


# --- SplitMix64 --------------------------------------------------------------


def test_splitmix_first_outputs():
    assert prng_next(0)[0] == 0xE220A8397B1DCDAF
    rng = Prng(0)
    assert [rng.next_u64() for _ in range(2)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]
    assert Prng(1).next_u64() == 0x910A2DEC89025CC1
    assert Prng(2).next_u64() == 0x975835DE1C9756CE


@settings(max_examples=50)
@given(st.integers(0, 2**64 - 1))
def test_splitmix_matches_reference_and_block_form(seed):
    ref = splitmix64_reference(seed, 8)
    rng = Prng(seed)
    assert [rng.next_u64() for _ in range(8)] == ref
    assert splitmix64_block(seed, 8).tolist() == ref


def test_uniforms_consume_the_stream():
    a, b = Prng(5), Prng(5)
    block = a.uniforms(4)
    single = [b.uniform() for _ in range(4)]
    assert block.tolist() == single
    assert a.state == b.state
    assert np.all((block >= 0) & (block < 1))


@settings(max_examples=50)
@given(st.integers(0, 2**32), st.integers(1, 1000))
def test_below_in_range(seed, n):
    rng = Prng(seed)
    assert all(0 <= rng.below(n) < n for _ in range(20))


def test_shuffle_is_permutation():
    out = Prng(3).shuffle(list(range(50)))
    assert sorted(out) == list(range(50)) and out != list(range(50))


# --- placement -------------------------------------------------------------------


def test_placement_deterministic_and_distinct():
    cands = valid_pixels((64, 64))
    a = place_sensors(30, 7, cands)
    assert a == place_sensors(30, 7, cands)
    assert len(set(a.locations)) == 30
    assert a != place_sensors(30, 8, cands)


def test_placement_respects_land():
    land = synth_land_mask(32, 32, seed=1)
    s = place_sensors(100, 1, valid_pixels(land.shape, land))
    assert all(land[r, c] == 1 for r, c in s.locations)


def test_placement_errors():
    with pytest.raises(ValueError):
        place_sensors(5, 0, [(0, 0)])
    with pytest.raises(ValueError):
        PlacementSpec((0,), (1,))
    with pytest.raises(ValueError):
        PlacementSpec((1,), (1,), mode="grid")


def test_twenty_five_training_placements():
    suite = placement_suite(PlacementSpec(TRAIN_COUNTS, TRAIN_SEEDS), valid_pixels((64, 64)))
    assert len(suite) == 25
    assert len({frozenset(p.sensors.locations) for p in suite}) == 25
    assert [p.key for p in suite[:2]] == ["n10_s1", "n10_s2"]


def test_fixed_subset_collapses_full_station_draws():
    stations = [(r, c) for r in range(5) for c in range(13)]  # 65 stations
    spec = PlacementSpec((45, 50, 55, 60, 65), (1, 2, 3), mode="fixed_subset")
    suite = placement_suite(spec, stations)
    # 4 counts x 3 seeds, plus one set for 65: every seed draws all stations
    assert len(suite) == 13
    assert all(set(p.sensors.locations) <= set(stations) for p in suite)
    with pytest.raises(ValueError):
        placement_suite(PlacementSpec((66,), (1,), mode="fixed_subset"), stations)


def test_unseen_seeds_must_be_disjoint():
    train = PlacementSpec(TRAIN_COUNTS, TRAIN_SEEDS)
    check_unseen_disjoint(train, PlacementSpec((10, 70), (7, 11)))
    with pytest.raises(ValueError):
        check_unseen_disjoint(train, PlacementSpec((70,), (2,)))


def test_station_file_round_trip(tmp_path):
    pts = [(0, 3), (5, 1)]
    write_stations(tmp_path / "s.txt", pts)
    (tmp_path / "s.txt").write_text("# header\n" + (tmp_path / "s.txt").read_text())
    assert read_stations(tmp_path / "s.txt") == pts


# --- splits ---------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 60), st.integers(0, 1000))
def test_partitioned_split_is_a_chunk_partition(n, chunk, seed):
    if chunk > n:
        return
    plan = partitioned_split(n, chunk, (0.8, 0.1, 0.1), seed)
    allf = sorted(plan.train + plan.val + plan.test)
    assert allf == list(range(n))
    owner = {}
    for name in ("train", "val", "test"):
        for f in getattr(plan, name):
            owner.setdefault(f // chunk, set()).add(name)
    assert all(len(v) == 1 for v in owner.values())


def test_partitioned_split_chunk_counts():
    plan = partitioned_split(600, 50, (0.8, 0.1, 0.1), 0)
    assert (len(plan.train), len(plan.val), len(plan.test)) == (500, 50, 50)
    assert plan == partitioned_split(600, 50, (0.8, 0.1, 0.1), 0)
    with pytest.raises(ValueError):
        partitioned_split(10, 20)
    with pytest.raises(ValueError):
        partitioned_split(10, 2, (0.5, 0.5, 0.5))


def test_extrapolation_split_thirty_ten():
    plan = extrapolation_split(480, 0.75)
    assert plan.fit_frames == tuple(range(360))
    assert plan.test == tuple(range(360, 480))
    assert plan.val == tuple(range(324, 360))
    assert max(plan.fit_frames) < min(plan.test)
    with pytest.raises(ValueError):
        extrapolation_split(10, 1.0)


def test_split_file_round_trip(tmp_path):
    plan = partitioned_split(100, 10, (0.6, 0.2, 0.2), 4)
    plan.save(tmp_path / "s.txt")
    assert SplitPlan.load(tmp_path / "s.txt") == plan
    with pytest.raises(ValueError):
        SplitPlan((0, 1), (1,), (), "x", 3)


# --- synthetic data ------------------------------------------------------------------


def test_cyclical_repeats_exactly():
    frames = synth_cyclical(16, 20, 120, 50, "wake", seed=3)
    assert len(frames) == 120
    assert np.array_equal(frames[7].values, frames[57].values)
    assert not np.array_equal(frames[7].values, frames[8].values)
    seasonal = synth_cyclical(16, 20, 60, 30, "seasonal", seed=3)
    assert np.array_equal(seasonal[1].values, seasonal[31].values)
    with pytest.raises(ValueError):
        synth_cyclical(4, 4, 10, 10)


def test_chaotic_shape_and_no_recurrence():
    frames = synth_chaotic(48, 128, 30, seed=0)
    assert frames[0].shape == (48, 128)
    diffs = [np.abs(frames[0].values - f.values).max() for f in frames[1:]]
    assert min(diffs) > 1e-3


def test_synthesis_is_seeded():
    a = synth_cyclical(8, 8, 20, 10, seed=1)
    b = synth_cyclical(8, 8, 20, 10, seed=1)
    c = synth_cyclical(8, 8, 20, 10, seed=2)
    assert all(x == y for x, y in zip(a, b))
    assert a[0] != c[0]


def test_gaussian_kernel_sums_to_one():
    k = gaussian_kernel(1.3)
    assert len(k) == 2 * 4 + 1 and abs(k.sum() - 1.0) < 1e-15


def test_blur_preserves_mass_with_wrapped_edges():
    f = ScalarField(np.random.default_rng(0).normal(size=(12, 16)))
    out = gaussian_blur(f, 1.5, edges="wrap")
    assert abs(out.values.sum() - f.values.sum()) < 1e-9
    assert gaussian_blur(f, 0.0) is f
    const = ScalarField(np.full((6, 6), 2.5))
    assert np.allclose(gaussian_blur(const, 2.0).values, 2.5)


def test_land_mask_fraction():
    land = synth_land_mask(40, 40, seed=2, land_fraction=0.3)
    assert land.dtype == np.uint8 and 0.25 < 1 - land.mean() < 0.35


def test_climatology_is_mean():
    c = climatology([ScalarField([[1.0]]), ScalarField([[3.0]])])
    assert c.values.tolist() == [[2.0]]


# --- recipes and assembly -----------------------------------------------------------


def test_recipe_rules():
    with pytest.raises(RecipeError):
        Recipe.parse("voronoi,sparse_location,dt_sensor")
    with pytest.raises(RecipeError):
        Recipe.parse("voronoi,voronoi")
    with pytest.raises(RecipeError):
        Recipe.parse("voronoi,salinity")
    assert Recipe.parse("voronoi,dt_sensor,land_mask").needs_land


def _setup(recipe_text, land=None, **flags):
    frames = synth_cyclical(12, 12, 20, 10, seed=0)
    recipe = Recipe.parse(recipe_text, **flags)
    builder = ChannelBuilder(GridGeometry.planar(), (12, 12), land)
    cands = valid_pixels((12, 12), land)
    pls = [Placement(5, s, place_sensors(5, s, cands)) for s in (1, 2)]
    return frames, recipe, builder, pls


def test_normalized_sample_channels():
    frames, recipe, builder, pls = _setup("voronoi,dt_sensor")
    norm = fit_recipe_normalizer(frames, pls, recipe, builder)
    s = assemble_sample(frames[0], pls[0].sensors, recipe, norm, builder)
    assert s.channel_kinds == (ChannelKind.VORONOI, ChannelKind.DT_SENSOR)
    x = s.input_array()
    assert np.abs(x).max() <= 1 + 1e-12
    assert np.abs(s.target.values).max() <= 1 + 1e-12
    assert norm.scale(TARGET) == max(np.abs(f.values).max() for f in frames)


def test_unnormalized_recipe_keeps_physical_units():
    frames, recipe, builder, pls = _setup("voronoi,sparse_location", normalized=False)
    norm = fit_recipe_normalizer(frames, pls, recipe, builder)
    s = assemble_sample(frames[3], pls[1].sensors, recipe, norm, builder)
    assert np.array_equal(s.target.values, frames[3].values)
    assert s.input_array()[1].sum() == 5


def test_land_recipe_and_masked_loss():
    land = synth_land_mask(12, 12, seed=3)
    frames, recipe, builder, pls = _setup("voronoi,dt_sensor,land_mask,dt_land", land, masked_loss=True)
    s = assemble_sample(frames[0], pls[0].sensors, recipe, None, builder)
    assert np.array_equal(s.loss_mask, land)
    assert np.array_equal(s.input_array()[2], land)
    frames, recipe, builder, pls = _setup("voronoi,land_mask")
    with pytest.raises(RecipeError):
        assemble_sample(frames[0], pls[0].sensors, recipe, None, builder)


def test_masked_voronoi_recipe():
    land = synth_land_mask(12, 12, seed=3)
    frames, recipe, builder, pls = _setup("voronoi,sparse_location", land, mask_voronoi=True)
    s = assemble_sample(frames[0], pls[0].sensors, recipe, None, builder)
    assert np.all(s.input_array()[0][land == 0] == 0)


def test_pairings():
    assert pair_indices([0, 1], 2, "all") == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert pair_indices([4, 5, 6], 2, "rotate") == [(4, 0), (5, 1), (6, 0)]
    rnd = pair_indices(list(range(50)), 5, "random", seed=1)
    assert rnd == pair_indices(list(range(50)), 5, "random", seed=1)
    assert {p for _, p in rnd} == set(range(5))
    with pytest.raises(ValueError):
        pair_indices([0], 1, "zip")


def test_build_arrays_shapes():
    frames, recipe, builder, pls = _setup("voronoi,dt_sensor")
    x, y, m = build_arrays(frames, pls, [(0, 0), (1, 1), (2, 0)], recipe, None, builder)
    assert x.shape == (3, 2, 12, 12) and y.shape == (3, 12, 12) and m.shape == (3, 12, 12)


def test_filled_sparse_needs_climatology():
    frames, recipe, builder, pls = _setup("filled_sparse")
    with pytest.raises(RecipeError):
        assemble_sample(frames[0], pls[0].sensors, recipe, None, builder)
    builder = ChannelBuilder(GridGeometry.planar(), (12, 12), None, climatology(frames))
    s = assemble_sample(frames[0], pls[0].sensors, recipe, None, builder)
    r, c = pls[0].sensors.locations[0]
    assert s.input_array()[0][r, c] == frames[0].values[r, c]
