"""Dataset files, filtering, distance binning and extraction/validation splits.

Dataset files are comma-separated with a header row. Required columns:
``tx_lat, tx_lon, rx_lat, rx_lon, distance3d_m, freq_ghz, path_loss_db``.
Optional columns: ``city`` (provenance tag used for splitting) and ``los``
(informational only; LOS/NLOS is always recomputed from the map).
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AmpleError, ParseError, SchemaError, UnknownTag
from .models import SamplePoint
from .regionmap import DEFAULT_D0, GeoPoint, Los, RegionMap, geo_to_grid, link_geometry_xy

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("tx_lat", "tx_lon", "rx_lat", "rx_lon", "distance3d_m", "freq_ghz", "path_loss_db")
OPTIONAL_COLUMNS = ("city", "los")


@dataclass(frozen=True)
class RawDataset:
    points: tuple[SamplePoint, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def column(self, name: str) -> np.ndarray:
        getter = {
            "freq": lambda p: p.freq,
            "distance3d": lambda p: p.distance3d,
            "path_loss": lambda p: p.path_loss,
        }[name]
        return np.fromiter((getter(p) for p in self.points), dtype=float, count=len(self.points))

    @property
    def tags(self) -> list[str]:
        return sorted({p.tag for p in self.points})

    def with_points(self, points) -> "RawDataset":
        return RawDataset(tuple(points), dict(self.provenance))


def _parse_float(text, name, row):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{name} = {text!r} is not a number", row) from None
    if not math.isfinite(value):
        raise ParseError(f"{name} is not finite", row)
    return value


def load_dataset(path, scenario: str = "") -> RawDataset:
    """Read a dataset file. Row numbers in errors count the header as row 1."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file (header row required)") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        unknown = [c for c in header if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
        if unknown:
            raise SchemaError(f"{path}: unknown columns {unknown}")
        idx = {name: header.index(name) for name in header}
        points = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", rowno)
            v = {c: _parse_float(row[idx[c]], c, rowno) for c in REQUIRED_COLUMNS}
            if v["freq_ghz"] <= 0:
                raise ParseError("freq_ghz must be positive", rowno)
            if v["distance3d_m"] <= 0:
                raise ParseError("distance3d_m must be positive", rowno)
            los = None
            if "los" in idx and row[idx["los"]].strip():
                try:
                    los = Los(row[idx["los"]].strip().upper())
                except ValueError:
                    raise ParseError(f"los must be LOS or NLOS, got {row[idx['los']]!r}", rowno) from None
            points.append(SamplePoint(
                tx=GeoPoint(v["tx_lat"], v["tx_lon"]),
                rx=GeoPoint(v["rx_lat"], v["rx_lon"]),
                distance3d=v["distance3d_m"],
                freq=v["freq_ghz"],
                path_loss=v["path_loss_db"],
                los=los,
                tag=row[idx["city"]].strip() if "city" in idx else "",
            ))
    if not points:
        raise SchemaError(f"{path}: no data rows")
    return RawDataset(tuple(points), {"file": str(path), "scenario": scenario})


def save_dataset(data: RawDataset, path) -> None:
    """Write a dataset; floats use ``repr`` so a reload is bit-exact."""
    with_city = any(p.tag for p in data)
    with_los = any(p.los is not None for p in data)
    header = list(REQUIRED_COLUMNS) + (["city"] if with_city else []) + (["los"] if with_los else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in data:
            row = [repr(float(v)) for v in (p.tx.lat, p.tx.lon, p.rx.lat, p.rx.lon, p.distance3d,
                                            p.freq, p.path_loss)]
            if with_city:
                row.append(p.tag)
            if with_los:
                row.append(p.los.value if p.los is not None else "")
            w.writerow(row)


def attach_geometry(data: RawDataset, region_map: RegionMap, d0: float = DEFAULT_D0,
                    skip_invalid: bool = False) -> RawDataset:
    """Recompute LOS flags and line matrices for every point from the map.

    A LOS value read from the file that disagrees with the map is replaced and
    reported once as a warning. Receivers inside buildings are kept but
    counted in a warning, since the line model is defined for outdoor users.
    """
    out = []
    mismatches = indoor = skipped = 0
    cache = {}
    for i, p in enumerate(data):
        key = (p.tx, p.rx)
        if key not in cache:
            try:
                x0, y0 = geo_to_grid(region_map, p.tx)
                x1, y1 = geo_to_grid(region_map, p.rx)
                cache[key] = link_geometry_xy(region_map, x0, y0, x1, y1, d0)
            except AmpleError as exc:
                if skip_invalid:
                    cache[key] = None
                else:
                    raise type(exc)(f"point {i}: {exc}") from exc
        geom = cache[key]
        if geom is None:
            skipped += 1
            continue
        line, los = geom
        if p.los is not None and p.los != los:
            mismatches += 1
        indoor += line.rx_indoor
        out.append(dataclasses.replace(p, line=line, los=los))
    if mismatches:
        log.warning("%d points had a file LOS flag that disagrees with the map; map wins", mismatches)
    if indoor:
        log.warning("%d receivers lie inside buildings", indoor)
    if skipped:
        log.warning("skipped %d points with invalid geometry", skipped)
    return data.with_points(out)


@dataclass(frozen=True)
class FilterSpec:
    max_path_loss: float = 150.0
    distance_range: tuple[float, float] = (0.0, math.inf)
    distance_bin: float = 5.0
    frequency_whitelist: tuple[float, ...] | None = None
    bin_mode: str = "label"

    def __post_init__(self):
        lo, hi = self.distance_range
        if not self.max_path_loss > 0:
            raise ValueError("max_path_loss must be positive")
        if not lo < hi:
            raise ValueError("distance_range needs min < max")
        if not self.distance_bin > 0:
            raise ValueError("distance_bin must be positive")
        if self.bin_mode not in ("label", "average"):
            raise ValueError("bin_mode must be 'label' or 'average'")


def _keep(p: SamplePoint, spec: FilterSpec) -> bool:
    lo, hi = spec.distance_range
    if p.path_loss > spec.max_path_loss or not lo <= p.distance3d <= hi:
        return False
    if spec.frequency_whitelist is not None:
        return any(abs(p.freq - f) <= 1e-9 for f in spec.frequency_whitelist)
    return True


def filter_dataset(data: RawDataset, spec: FilterSpec = FilterSpec()) -> RawDataset:
    """Threshold by path loss, distance and frequency, then bin by distance.

    ``label`` mode keeps every survivor and sets ``bin_label``; ``average``
    mode replaces each (bin, frequency) cell by its first point carrying the
    cell's mean path loss.
    """
    kept = [dataclasses.replace(p, bin_label=int(p.distance3d // spec.distance_bin))
            for p in data if _keep(p, spec)]
    if spec.bin_mode == "average":
        cells: dict[tuple[int, float], list[SamplePoint]] = {}
        for p in kept:
            cells.setdefault((p.bin_label, p.freq), []).append(p)
        kept = [dataclasses.replace(group[0], path_loss=float(np.mean([q.path_loss for q in group])))
                if len(group) > 1 else group[0] for group in cells.values()]
    return data.with_points(kept)


def split_extraction_validation(data: RawDataset, extraction, validation) -> tuple[RawDataset, RawDataset]:
    """Partition by provenance tag (city), never at random.

    ``extraction`` and ``validation`` are a tag or a collection of tags.
    """
    ext = {extraction} if isinstance(extraction, str) else set(extraction)
    val = {validation} if isinstance(validation, str) else set(validation)
    if ext & val:
        raise ValueError(f"tags {sorted(ext & val)} requested on both sides")
    present = set(data.tags)
    absent = sorted((ext | val) - present)
    if absent:
        raise UnknownTag(f"tags not in dataset: {absent}")
    stray = sorted(present - ext - val)
    if stray:
        raise UnknownTag(f"points tagged {stray} belong to neither side")
    a = [p for p in data if p.tag in ext]
    b = [p for p in data if p.tag in val]
    return (RawDataset(tuple(a), {**data.provenance, "city": ",".join(sorted(ext))}),
            RawDataset(tuple(b), {**data.provenance, "city": ",".join(sorted(val))}))


def merge(*datasets: RawDataset) -> RawDataset:
    points = [p for d in datasets for p in d]
    return RawDataset(tuple(points), {"merged": [d.provenance for d in datasets]})
