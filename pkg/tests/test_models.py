import math

import numpy as np
import pytest

from ample.errors import DistanceBelowReference, InvalidLine, PresetError, RegionCountMismatch
from ample.models import (AbgParams, AmpleParams, CiParams, Preset, builtin_preset, builtin_presets,
                          collapse_line, format_preset, fspl, load_preset, parse_preset, predict_abg,
                          predict_ample, predict_ample_features, predict_ci, sample_shadowing,
                          save_preset)
from ample.regionmap import LineMatrix

UMA_LOS = builtin_preset("ample_uma_los").params


def line(*segs, p=0):
    codes, lengths = zip(*segs)
    return LineMatrix(tuple(codes), tuple(float(v) for v in lengths), p, float(sum(lengths)))


def test_fspl_values():
    assert fspl(1.0, 1.0) == pytest.approx(32.448, abs=1e-3)
    # independent evaluation: 20 log10(4 pi f d / c) with f in Hz
    assert fspl(2.1, 1.0) == pytest.approx(20 * math.log10(4 * math.pi * 2.1e9 / 299_792_458.0), abs=1e-12)
    assert fspl(2.1, 1.0) == pytest.approx(38.8922, abs=1e-4)
    for f in (0.85, 3.5, 28.0):
        assert fspl(f, 10.0) - fspl(f, 1.0) == pytest.approx(20.0, abs=1e-12)


def test_collapse_single_region():
    assert collapse_line(line((0, 1), (2, 99)), 4) == pytest.approx([0, 20, 0, 0])


def test_collapse_strip_fixture():
    D = collapse_line(line((0, 1), (2, 39), (1, 20), (2, 40)), 4)
    assert D[0] == pytest.approx(10 * math.log10(60 / 40))
    assert D[1] == pytest.approx(10 * math.log10(40) + 10 * math.log10(100 / 60))
    assert D.sum() == pytest.approx(20.0)


def test_collapse_errors():
    with pytest.raises(InvalidLine):
        collapse_line(line((2, 5), (1, 5)), 4)
    with pytest.raises(RegionCountMismatch):
        collapse_line(line((0, 1), (5, 5)), 4)


def test_collapse_matches_segment_sum():
    # the per-segment form summed segment by segment
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = rng.integers(1, 8)
        segs = [(0, 1.0)] + [(int(rng.integers(1, 5)), float(rng.uniform(0.5, 50))) for _ in range(k)]
        n = rng.uniform(1, 4, 4)
        cum, direct = 1.0, 0.0
        for c, l in segs[1:]:
            direct += 10 * n[c - 1] * math.log10((cum + l) / cum)
            cum += l
        assert collapse_line(line(*segs), 4) @ n == pytest.approx(direct, rel=1e-12)


def test_predict_ample_table_value():
    value = predict_ample(UMA_LOS, line((0, 1), (2, 99), p=2), 0.85)
    expected = 59.86 + 20 * 1.14 + 2 * 0.09 + 10 * 0.92 * math.log10(0.85)
    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(82.19, abs=0.01)


def test_predict_ample_gamma_zero_and_doubling():
    p = AmpleParams(50.0, (2.0, 2.5, 3.0, 2.2), 1.0, 0.0, 5.0)
    ln = line((0, 1), (3, 49))
    assert predict_ample(p, ln, 0.85) == predict_ample(p, ln, 5.0)
    longer = line((0, 1), (3, 99))
    assert predict_ample(p, longer, 2.0) - predict_ample(p, ln, 2.0) == \
        pytest.approx(10 * 3.0 * math.log10(2), rel=1e-12)


def test_ample_degenerates_to_ci():
    f, n = 2.1, 2.7
    for d in (5.0, 50.0, 700.0):
        p = AmpleParams(fspl(f, 1.0), (1.0, n, 1.0, 1.0), 3.0, 0.0, 1.0)
        assert predict_ample(p, line((0, 1), (2, d - 1)), f) == \
            pytest.approx(predict_ci(CiParams(n, 1.0), f, d), abs=1e-9)


def test_ample_affine_in_params():
    rng = np.random.default_rng(3)
    D = rng.uniform(0, 20, (10, 4))
    pp = rng.integers(0, 6, 10)
    f = rng.uniform(0.8, 6, 10)
    a = AmpleParams(10.0, (1, 2, 3, 4), 0.5, 1.0, 1.0)
    b = AmpleParams(5.0, (0.5, 0.1, 0.2, 0.3), 2.0, 0.7, 1.0)
    s = AmpleParams.from_vector(a.mean_vector() + b.mean_vector(), 1.0)
    lhs = predict_ample_features(s, D, pp, f)
    rhs = predict_ample_features(a, D, pp, f) + predict_ample_features(b, D, pp, f)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_predict_ci_values():
    p = CiParams(2.26, 5.06)
    assert predict_ci(p, 2.1, 1.0) == pytest.approx(fspl(2.1, 1.0))
    assert predict_ci(p, 2.1, 100.0) == pytest.approx(84.09, abs=0.01)
    free = CiParams(2.0, 1.0)
    assert predict_ci(free, 3.5, 10.0) - predict_ci(free, 3.5, 1.0) == pytest.approx(20.0)
    with pytest.raises(DistanceBelowReference):
        predict_ci(p, 2.1, 0.5)


def test_predict_abg():
    p = AbgParams(3.0, 20.0, 2.0, 5.0)
    assert predict_abg(p, 1.0, 1.0) == 20.0
    assert predict_abg(p, 28.0, 40.0) - predict_abg(p, 2.8, 40.0) == pytest.approx(20.0)
    rng = np.random.default_rng(5)
    abg = AbgParams(2.0, 32.448, 2.0, 1.0)
    ci = CiParams(2.0, 1.0)
    for f, d in zip(rng.uniform(0.5, 30, 5), rng.uniform(1, 1000, 5)):
        assert predict_abg(abg, f, d) == pytest.approx(predict_ci(ci, f, d), abs=2e-3)


def test_abg_matches_ci_with_exact_intercept():
    abg = AbgParams(2.0, fspl(1.0, 1.0), 2.0, 1.0)
    rng = np.random.default_rng(6)
    for f, d in zip(rng.uniform(0.5, 30, 5), rng.uniform(1, 1000, 5)):
        assert predict_abg(abg, f, d) == pytest.approx(predict_ci(CiParams(2.0, 1.0), f, d), abs=1e-9)


def test_monotone_in_distance():
    d = np.linspace(1, 1000, 200)
    assert np.all(np.diff(predict_ci(CiParams(2.5, 1.0), 2.0, d)) >= 0)
    assert np.all(np.diff(predict_abg(AbgParams(3, 20, 2, 1), 2.0, d)) >= 0)


def test_shadowing():
    assert sample_shadowing(0.0, np.random.default_rng(0)) == 0.0
    a = [sample_shadowing(9.53, np.random.default_rng(7)) for _ in range(3)]
    b = [sample_shadowing(9.53, np.random.default_rng(7)) for _ in range(3)]
    assert a == b
    draws = 9.53 * np.random.default_rng(1).standard_normal(1_000_000)
    assert np.std(draws) == pytest.approx(9.53, abs=0.05)
    with pytest.raises(ValueError):
        sample_shadowing(-1.0, np.random.default_rng(0))


def test_builtin_presets_match_tables():
    names = builtin_presets()
    assert {"ample_uma_los", "ample_uma_nlos", "ample_umi_los", "ample_umi_nlos"} <= set(names)
    nlos = builtin_preset("ample_uma_nlos").params
    assert nlos.A == 59.79 and nlos.n == (1.80, 1.64, 2.71, 1.93)
    assert (nlos.X, nlos.gamma, nlos.sigma) == (0.28, 1.94, 9.53)
    ci = builtin_preset("ci_uma_los").params
    assert (ci.n, ci.sigma, ci.d0) == (2.26, 5.06, 1.0)
    with pytest.raises(PresetError):
        builtin_preset("nope")


def test_preset_round_trip(tmp_path):
    for params in (UMA_LOS, CiParams(2.123456789, 4.2, 1.0), AbgParams(3.1, 19.9, 2.05, 6.6)):
        save_preset(Preset(params, scenario="x"), tmp_path / "p.txt")
        back = load_preset(tmp_path / "p.txt")
        assert back.params == params and back.scenario == "x"


def test_preset_errors(caplog):
    with pytest.raises(PresetError):
        parse_preset("model = ci\nn = 2\n")
    with pytest.raises(PresetError):
        parse_preset("model = ci\nn = 2\nsigma = 1\nfoo = 3\n")
    with pytest.raises(PresetError):
        parse_preset("model = ci\nn = 2\nn = 3\nsigma = 1\n")
    with pytest.raises(PresetError):
        parse_preset("model = foo\n")
    text = format_preset(AmpleParams(50, (-1.0, 2, 2, 2), 0, 1, 1)) + "# trailing comment\n"
    assert parse_preset(text).params.n[0] == -1.0
    assert "negative" in caplog.text
