import math

import numpy as np
import pytest

from ample.dataio import (FilterSpec, RawDataset, attach_geometry, filter_dataset, load_dataset, merge,
                          save_dataset, split_extraction_validation)
from ample.errors import ParseError, SchemaError, UnknownTag
from ample.models import SamplePoint
from ample.regionmap import GeoPoint, Los

from conftest import make_map

HEADER = "tx_lat,tx_lon,rx_lat,rx_lon,distance3d_m,freq_ghz,path_loss_db"


def points(n=20, seed=0, tags=("a", "b")):
    rng = np.random.default_rng(seed)
    return RawDataset(tuple(
        SamplePoint(GeoPoint(53.0, -1.0), GeoPoint(53.0 + rng.uniform(0, 1e-3), -1.0 + 1e-4),
                    float(rng.uniform(10, 500)), float(rng.choice([0.85, 2.1, 5.0])),
                    float(rng.uniform(60, 170)), tag=tags[i % len(tags)])
        for i in range(n)))


def test_round_trip_bit_exact(tmp_path):
    data = points(50)
    save_dataset(data, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv")
    assert back.points == data.points
    save_dataset(back, tmp_path / "e.csv")
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "e.csv").read_bytes()


def test_parse_errors_carry_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + "\n53,-1,53.001,-1,100,2.1,90\n53,-1,53.001,-1,100,-2.1,90\n")
    with pytest.raises(ParseError, match="row 3"):
        load_dataset(p)
    p.write_text(HEADER + "\n53,-1,53.001,-1,abc,2.1,90\n")
    with pytest.raises(ParseError, match="row 2"):
        load_dataset(p)
    p.write_text(HEADER + "\n53,-1,53.001,-1,0,2.1,90\n")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_schema_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("")
    with pytest.raises(SchemaError):
        load_dataset(p)
    p.write_text(HEADER + "\n")
    with pytest.raises(SchemaError):
        load_dataset(p)
    p.write_text("tx_lat,tx_lon\n1,2\n")
    with pytest.raises(SchemaError):
        load_dataset(p)


def test_filter_thresholds_and_bins():
    data = points(200)
    spec = FilterSpec(max_path_loss=150, distance_range=(20, 400), distance_bin=5,
                      frequency_whitelist=(2.1, 5.0))
    out = filter_dataset(data, spec)
    assert all(p.path_loss <= 150 and 20 <= p.distance3d <= 400 and p.freq in (2.1, 5.0) for p in out)
    assert all(p.bin_label == int(p.distance3d // 5) for p in out)
    assert filter_dataset(out, spec).points == out.points


def test_filter_average_mode():
    pts = [SamplePoint(GeoPoint(53, -1), GeoPoint(53.001, -1), d, 2.1, l)
           for d, l in ((10.0, 100.0), (12.0, 110.0), (16.0, 90.0))]
    out = filter_dataset(RawDataset(tuple(pts)), FilterSpec(distance_bin=5, bin_mode="average"))
    assert [p.path_loss for p in out] == [105.0, 90.0]
    with pytest.raises(ValueError):
        FilterSpec(bin_mode="median")
    with pytest.raises(ValueError):
        FilterSpec(distance_range=(5, 1))


def test_split_and_merge():
    data = points(30, tags=("sheffield", "barnsley"))
    a, b = split_extraction_validation(data, "sheffield", "barnsley")
    assert len(a) + len(b) == len(data)
    assert {p.tag for p in a} == {"sheffield"} and {p.tag for p in b} == {"barnsley"}
    a2, b2 = split_extraction_validation(merge(a, b), "sheffield", "barnsley")
    assert a2.points == a.points and b2.points == b.points
    with pytest.raises(UnknownTag):
        split_extraction_validation(data, "sheffield", "london")


def test_attach_geometry_recomputes_los(caplog):
    row = [2] * 20 + [1] * 10 + [2] * 20
    m = make_map([row] * 4, cell_size=5.0)
    tx = m.grid_to_geo(10, 10)
    rx_open = m.grid_to_geo(90, 10)
    rx_blocked = m.grid_to_geo(240, 10)
    data = RawDataset((
        SamplePoint(tx, rx_open, 80.0, 2.1, 90.0, los=Los.NLOS),
        SamplePoint(tx, rx_blocked, 230.0, 2.1, 120.0),
    ))
    out = attach_geometry(data, m)
    assert [p.los for p in out] == [Los.LOS, Los.NLOS]
    assert out[1].line.p == 2
    assert "disagrees" in caplog.text
