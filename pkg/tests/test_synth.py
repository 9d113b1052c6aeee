import math

import numpy as np
import pytest

from ample.dataio import save_dataset
from ample.errors import InvalidRecipe
from ample.metrics import fit_best_distribution
from ample.models import CiParams, builtin_preset, predict_ci
from ample.regionmap import RegionCode, classify_los, geo_to_grid
from ample.synth import (UMA_RECIPE, UMI_RECIPE, MapRecipe, SynthSpec, generate_dataset, generate_map,
                         place_tx, rx_grid)

from conftest import make_map


def test_fill_ratio_zero_and_determinism():
    m = generate_map(MapRecipe(fill_ratio=0.0), seed=1)
    assert not np.any(m.cells == RegionCode.BUILDING)
    assert generate_map(MapRecipe(), 3) == generate_map(MapRecipe(), 3)


def test_fill_ratio_and_codes():
    m = generate_map(MapRecipe(width=200, height=200, fill_ratio=0.4), seed=2)
    frac = float(np.mean(m.cells == RegionCode.BUILDING))
    assert 0.35 <= frac <= 0.45
    assert set(np.unique(m.cells)) == {1, 2, 3, 4}
    for r in (UMA_RECIPE, UMI_RECIPE):
        mm = generate_map(r, 0)
        assert abs(float(np.mean(mm.cells == 1)) - r.fill_ratio) <= 0.05


def test_invalid_recipes():
    with pytest.raises(InvalidRecipe):
        generate_map(MapRecipe(fill_ratio=0.99), 0)
    with pytest.raises(InvalidRecipe):
        generate_map(MapRecipe(block=0), 0)


def test_noise_free_ci_exact():
    m = generate_map(MapRecipe(width=60, height=60), 0)
    tx = place_tx(m, 0)
    truth = CiParams(2.4, 0.0)
    res = generate_dataset(SynthSpec(m, tx, truth, rx_resolution=20))
    for p in res.dataset:
        assert p.path_loss == pytest.approx(predict_ci(truth, p.freq, p.distance3d), abs=1e-9)


def test_counts_and_los_consistency():
    m = generate_map(MapRecipe(width=60, height=60, fill_ratio=0.3), 1)
    tx = place_tx(m, 1)
    spec = SynthSpec(m, tx, builtin_preset("ample_uma_nlos").params, rx_resolution=15)
    res = generate_dataset(spec)
    assert len(res.dataset) == res.candidates - res.skip_count
    assert res.candidates == len(rx_grid(m, 15)) * 3
    for p in res.dataset.points[::3]:
        assert classify_los(m, p.tx, p.rx) == p.los


def test_same_seed_byte_identical(tmp_path):
    m = generate_map(MapRecipe(width=50, height=50), 4)
    spec = SynthSpec(m, place_tx(m, 4), builtin_preset("ample_umi_nlos").params, rx_resolution=15, seed=9)
    save_dataset(generate_dataset(spec).dataset, tmp_path / "a.csv")
    save_dataset(generate_dataset(spec).dataset, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_shadowing_residuals_normal():
    m = generate_map(UMA_RECIPE, 1)
    params = builtin_preset("ample_uma_nlos").params
    spec = SynthSpec(m, place_tx(m, 1), params, rx_resolution=8, seed=3)
    res = generate_dataset(spec)
    assert len(res.dataset) >= 50_000
    flat = type(params)(params.A, params.n, params.X, params.gamma, 0.0)
    truth = generate_dataset(SynthSpec(m, spec.tx, flat, rx_resolution=8, seed=3)).dataset
    resid = np.array([a.path_loss - b.path_loss for a, b in zip(res.dataset, truth)])
    assert fit_best_distribution(resid).family == "normal"
    assert np.std(resid) == pytest.approx(9.53, abs=0.3)


def test_spec_validation():
    m = make_map(np.full((4, 4), 2))
    with pytest.raises(ValueError):
        SynthSpec(m, m.grid_to_geo(1, 1), CiParams(2, 1), rx_resolution=0)
    with pytest.raises(ValueError):
        SynthSpec(m, m.grid_to_geo(1, 1), CiParams(2, 1), freqs=())
