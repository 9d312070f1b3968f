"""Sensor placement, frame splits, synthetic data and sample assembly."""

from .assembly import ChannelBuilder, Recipe, RecipeError, assemble_sample, build_arrays, fit_recipe_normalizer, pair_indices
from .placement import (
    FIXED_SUBSET,
    FREE,
    UNSEEN_SEEDS,
    Placement,
    PlacementSpec,
    Prng,
    check_unseen_disjoint,
    place_sensors,
    placement_suite,
    prng_next,
    valid_pixels,
)
from .splits import SplitPlan, extrapolation_split, partitioned_split
from .synth import climatology, gaussian_blur, synth_chaotic, synth_cyclical, synth_land_mask
