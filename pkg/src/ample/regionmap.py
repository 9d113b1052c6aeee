"""Geo-referenced region maps and per-link line geometry.

A :class:`RegionMap` is a 2D grid of region codes anchored at its south-west
corner. :func:`trace_line` walks the straight transmitter-receiver segment
across the grid and returns a :class:`LineMatrix`: the ordered region runs
along the link (after the reference-distance segment), plus the number of
building faces crossed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import CiExceedsLink, DegenerateLink, MapFormatError, OutOfBounds

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_D0 = 1.0
DEFAULT_CELL_SIZE = 5.0
# slack for points sitting exactly on the map edge after a projection round trip
_EDGE_TOL = 1e-6


class RegionCode(IntEnum):
    BUILDING = 1
    OPEN_SPACE = 2
    FOLIAGE = 3
    WATER = 4


DEFAULT_LEGEND = {1: "Building", 2: "OpenSpace", 3: "Foliage", 4: "Water"}


class Los(str, Enum):
    LOS = "LOS"
    NLOS = "NLOS"


class GeoPoint(NamedTuple):
    lat: float
    lon: float


@dataclass(frozen=True, eq=False)
class RegionMap:
    """Row-major grid of region codes; row 0 is the northernmost row.

    ``origin`` is the (lat, lon) of the south-west corner.
    """

    width: int
    height: int
    cell_size: float
    origin: GeoPoint
    cells: np.ndarray
    legend: dict = field(default_factory=lambda: dict(DEFAULT_LEGEND))

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MapFormatError("width and height must be positive")
        if not self.cell_size > 0:
            raise MapFormatError("cell_size must be positive")
        lat, lon = self.origin
        if not -90.0 < lat < 90.0 or not -180.0 <= lon < 180.0:
            raise MapFormatError(f"origin {self.origin} outside valid lat/lon range")
        codes = sorted(self.legend)
        if codes != list(range(1, len(codes) + 1)):
            raise MapFormatError("legend codes must be dense 1..M")
        cells = np.ascontiguousarray(self.cells, dtype=np.int8)
        if cells.shape != (self.height, self.width):
            raise MapFormatError(f"cells shape {cells.shape} != ({self.height}, {self.width})")
        if cells.size and (cells.min() < 1 or cells.max() > len(codes)):
            bad = sorted(set(np.unique(cells).tolist()) - set(codes))
            raise MapFormatError(f"unknown region codes {bad}")
        cells.setflags(write=False)
        object.__setattr__(self, "origin", GeoPoint(float(lat), float(lon)))
        object.__setattr__(self, "cells", cells)
        # south-up copy for the traversal kernel
        object.__setattr__(self, "_grid", np.ascontiguousarray(cells[::-1]))

    @property
    def n_regions(self) -> int:
        return len(self.legend)

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.cell_size, self.height * self.cell_size

    @property
    def building_code(self) -> int:
        for code, name in self.legend.items():
            if name.lower() == "building":
                return code
        return int(RegionCode.BUILDING)

    def code_at(self, x: float, y: float) -> int:
        """Region code of the cell containing planar point (x, y)."""
        ix = min(max(int(math.floor(x / self.cell_size)), 0), self.width - 1)
        iy = min(max(int(math.floor(y / self.cell_size)), 0), self.height - 1)
        return int(self._grid[iy, ix])

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        """Planar center of the cell at column ``ix``, row ``iy`` counted from the south."""
        return (ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size

    def grid_to_geo(self, x: float, y: float) -> GeoPoint:
        lat0 = math.radians(self.origin.lat)
        lat = self.origin.lat + math.degrees(y / EARTH_RADIUS_M)
        lon = self.origin.lon + math.degrees(x / (EARTH_RADIUS_M * math.cos(lat0)))
        return GeoPoint(lat, lon)

    def __eq__(self, other):
        if not isinstance(other, RegionMap):
            return NotImplemented
        return (
            (self.width, self.height, self.cell_size, self.origin, self.legend)
            == (other.width, other.height, other.cell_size, other.origin, other.legend)
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None


def geo_to_grid(region_map: RegionMap, p: GeoPoint) -> tuple[float, float]:
    """Equirectangular projection of ``p`` about the map origin, in meters."""
    lat0 = math.radians(region_map.origin.lat)
    x = EARTH_RADIUS_M * math.radians(p[1] - region_map.origin.lon) * math.cos(lat0)
    y = EARTH_RADIUS_M * math.radians(p[0] - region_map.origin.lat)
    ex, ey = region_map.extent
    if not (-_EDGE_TOL <= x <= ex + _EDGE_TOL and -_EDGE_TOL <= y <= ey + _EDGE_TOL):
        raise OutOfBounds(f"point {tuple(p)} maps to ({x:.3f}, {y:.3f}) m, outside the map")
    return min(max(x, 0.0), ex), min(max(y, 0.0), ey)


@dataclass(frozen=True)
class LineMatrix:
    """Region runs along one link.

    ``codes[0]`` is always 0 (the reference-distance segment, length d0).
    ``p`` counts building faces crossed over the whole line.
    """

    codes: tuple[int, ...]
    lengths: tuple[float, ...]
    p: int
    total_length: float
    rx_indoor: bool = False

    @property
    def d0(self) -> float:
        return self.lengths[0]

    @property
    def segments(self) -> list[tuple[int, float]]:
        return list(zip(self.codes, self.lengths))

    def reversed_runs(self):
        return list(zip(reversed(self.codes[1:]), reversed(self.lengths[1:])))


def _penetrations(codes, building: int) -> int:
    inside = [c == building for c in codes]
    return sum(1 for a, b in zip(inside, inside[1:]) if a != b)


def _line_from_runs(codes, lengths, total, d0, building, eps=1e-9) -> LineMatrix:
    if total <= d0 + eps:
        raise CiExceedsLink(f"d0 = {d0} m is not shorter than the link ({total:.6f} m)")
    out_codes = [0]
    out_lengths = [float(d0)]
    pos = 0.0
    carry = 0.0
    for code, length in zip(codes, lengths):
        end = pos + length
        if end > d0:
            part = end - max(pos, d0) + carry
            carry = 0.0
            if part > eps:
                out_codes.append(int(code))
                out_lengths.append(part)
            else:
                carry = part
        pos = end
    if carry and len(out_lengths) > 1:
        out_lengths[-1] += carry
    return LineMatrix(
        codes=tuple(out_codes),
        lengths=tuple(out_lengths),
        p=_penetrations(codes, building),
        total_length=float(total),
        rx_indoor=bool(len(codes) and codes[-1] == building),
    )


def _runs_xy(region_map: RegionMap, x0, y0, x1, y1):
    total = math.hypot(x1 - x0, y1 - y0)
    if total < 1e-9:
        raise DegenerateLink("transmitter and receiver coincide")
    codes, lengths = kernels.trace_runs(region_map._grid, float(region_map.cell_size),
                                        float(x0), float(y0), float(x1), float(y1))
    return codes.tolist(), lengths.tolist(), total


def _los_from_runs(codes, building) -> Los:
    start = 1 if codes and codes[0] == building else 0
    return Los.NLOS if building in codes[start:] else Los.LOS


def link_geometry_xy(region_map: RegionMap, x0, y0, x1, y1, d0=DEFAULT_D0):
    """Line matrix and LOS flag from planar coordinates, sharing one traversal."""
    codes, lengths, total = _runs_xy(region_map, x0, y0, x1, y1)
    building = region_map.building_code
    return _line_from_runs(codes, lengths, total, d0, building), _los_from_runs(codes, building)


def trace_line(region_map: RegionMap, tx: GeoPoint, rx: GeoPoint, d0: float = DEFAULT_D0) -> LineMatrix:
    """Line matrix of the straight link ``tx`` -> ``rx``.

    Raises OutOfBounds, DegenerateLink or CiExceedsLink.
    """
    if not d0 > 0:
        raise ValueError("d0 must be positive")
    x0, y0 = geo_to_grid(region_map, tx)
    x1, y1 = geo_to_grid(region_map, rx)
    codes, lengths, total = _runs_xy(region_map, x0, y0, x1, y1)
    return _line_from_runs(codes, lengths, total, d0, region_map.building_code)


def classify_los(region_map: RegionMap, tx: GeoPoint, rx: GeoPoint) -> Los:
    """LOS when the link crosses no building, ignoring the building under the transmitter."""
    x0, y0 = geo_to_grid(region_map, tx)
    x1, y1 = geo_to_grid(region_map, rx)
    if math.hypot(x1 - x0, y1 - y0) < 1e-9:
        return Los.LOS
    codes, _, _ = _runs_xy(region_map, x0, y0, x1, y1)
    return _los_from_runs(codes, region_map.building_code)


# --- file format -----------------------------------------------------------

_HEADER_KEYS = ("width", "height", "cell_size_m", "origin_lat", "origin_lon")


def _format_legend(legend) -> str:
    return " ".join(f"{code}:{name}" for code, name in sorted(legend.items()))


def _parse_header(lines, path, extra=()):
    header = {}
    body_start = None
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "data":
            body_start = i + 1
            break
        key, _, value = line.partition(" ")
        if key not in _HEADER_KEYS + ("legend",) + tuple(extra):
            raise MapFormatError(f"{path}: unknown header key {key!r}")
        header[key] = value.strip()
    if body_start is None:
        raise MapFormatError(f"{path}: missing 'data' line")
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise MapFormatError(f"{path}: missing header keys {missing}")
    return header, body_start


def _parse_legend(text):
    legend = {}
    for item in text.split():
        code, _, name = item.partition(":")
        try:
            legend[int(code)] = name
        except ValueError as exc:
            raise MapFormatError(f"bad legend entry {item!r}") from exc
    return legend


def load_map(path) -> RegionMap:
    """Read a region map file (header, ``data`` line, rows north to south)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header, start = _parse_header(lines, path)
    try:
        width, height = int(header["width"]), int(header["height"])
        cell_size = float(header["cell_size_m"])
        origin = GeoPoint(float(header["origin_lat"]), float(header["origin_lon"]))
    except ValueError as exc:
        raise MapFormatError(f"{path}: {exc}") from exc
    legend = _parse_legend(header["legend"]) if "legend" in header else dict(DEFAULT_LEGEND)
    rows = [ln.split() for ln in lines[start:] if ln.strip()]
    if len(rows) != height or any(len(r) != width for r in rows):
        raise MapFormatError(f"{path}: expected {height} rows of {width} codes")
    try:
        cells = np.array(rows, dtype=np.int64)
    except ValueError as exc:
        raise MapFormatError(f"{path}: non-integer region code") from exc
    return RegionMap(width, height, cell_size, origin, cells, legend)


def save_map(region_map: RegionMap, path) -> None:
    lines = [
        "# region map",
        f"width {region_map.width}",
        f"height {region_map.height}",
        f"cell_size_m {region_map.cell_size!r}",
        f"origin_lat {region_map.origin.lat!r}",
        f"origin_lon {region_map.origin.lon!r}",
        f"legend {_format_legend(region_map.legend)}",
        "data",
    ]
    lines.extend(" ".join(str(int(c)) for c in row) for row in region_map.cells)
    Path(path).write_text("\n".join(lines) + "\n")


def save_grid(path, region_map: RegionMap, values: np.ndarray, nodata: float = -9999.0,
              fmt: str = "{:.4f}") -> None:
    """Write a float grid aligned with ``region_map`` (rows north to south)."""
    if values.shape != (region_map.height, region_map.width):
        raise ValueError("grid shape does not match the map")
    write_value_grid(path, values, region_map.cell_size, region_map.origin, nodata, fmt)


def write_value_grid(path, values: np.ndarray, cell_size: float, origin: GeoPoint,
                     nodata: float = -9999.0, fmt: str = "{:.4f}") -> None:
    """Write a float grid of any resolution; non-finite cells become ``nodata``."""
    values = np.asarray(values, dtype=float)
    height, width = values.shape
    lines = [
        "# value grid [dB]",
        f"width {width}",
        f"height {height}",
        f"cell_size_m {float(cell_size)!r}",
        f"origin_lat {origin.lat!r}",
        f"origin_lon {origin.lon!r}",
        f"nodata {nodata!r}",
        "data",
    ]
    for row in values:
        lines.append(" ".join(fmt.format(nodata if not np.isfinite(v) else v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path) -> tuple[dict, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    header, start = _parse_header(lines, path, extra=("nodata",))
    rows = [ln.split() for ln in lines[start:] if ln.strip()]
    values = np.array(rows, dtype=np.float64)
    nodata = float(header.get("nodata", "nan"))
    values[values == nodata] = np.nan
    return header, values
