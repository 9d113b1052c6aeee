"""Procedural city maps and synthetic path loss datasets with known parameters.

Maps are city-block layouts: a street grid, one rectangular building per
block sized to meet the requested building fill ratio, then foliage and
water discs on open ground. Datasets place receivers on a regular grid of
outdoor cells, compute the chosen model's mean for each link and add
i.i.d. Gaussian shadowing.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import RawDataset
from .errors import AmpleError, InvalidRecipe
from .models import AbgParams, AmpleParams, CiParams, ModelParams, SamplePoint, collapse_line, \
    predict_abg, predict_ci
from .regionmap import DEFAULT_D0, GeoPoint, RegionCode, RegionMap, geo_to_grid, link_geometry_xy


@dataclass(frozen=True)
class MapRecipe:
    width: int = 200
    height: int = 200
    cell_size: float = 5.0
    block: int = 20
    street: int = 4
    fill_ratio: float = 0.3
    foliage_patches: int = 6
    water_patches: int = 2
    patch_radius: int = 6
    origin_lat: float = 53.38
    origin_lon: float = -1.49

    def validate(self):
        if self.width <= 0 or self.height <= 0 or not self.cell_size > 0:
            raise InvalidRecipe("map dimensions must be positive")
        if self.block < 1 or self.street < 1:
            raise InvalidRecipe("block and street widths must be >= 1 cell")
        if not 0.0 <= self.fill_ratio < 1.0:
            raise InvalidRecipe("fill_ratio must be in [0, 1)")
        if min(self.foliage_patches, self.water_patches, self.patch_radius) < 0:
            raise InvalidRecipe("patch counts and radius must be >= 0")


# low fill, wide streets (macrocell) and dense narrow-street layout (microcell)
UMA_RECIPE = MapRecipe(width=300, height=300, block=24, street=6, fill_ratio=0.3,
                       foliage_patches=10, water_patches=3, patch_radius=8)
UMI_RECIPE = MapRecipe(width=140, height=140, block=12, street=3, fill_ratio=0.5,
                       foliage_patches=5, water_patches=2, patch_radius=4,
                       origin_lat=51.49, origin_lon=-0.15)


def _spans(extent, block, street):
    spans = []
    start = street
    while start < extent:
        spans.append((start, min(start + block, extent)))
        start += block + street
    return spans


def generate_map(recipe: MapRecipe = MapRecipe(), seed: int = 0) -> RegionMap:
    """Deterministic city-block map; same recipe and seed give the same map."""
    recipe.validate()
    rng = np.random.default_rng(seed)
    W, H = recipe.width, recipe.height
    cells = np.full((H, W), int(RegionCode.OPEN_SPACE), dtype=np.int8)  # row 0 = north

    blocks = [(x0, x1, y0, y1) for (y0, y1) in _spans(H, recipe.block, recipe.street)
              for (x0, x1) in _spans(W, recipe.block, recipe.street)]
    buildable = sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in blocks)
    target = int(round(recipe.fill_ratio * W * H))
    if target > buildable:
        raise InvalidRecipe(f"fill_ratio {recipe.fill_ratio} exceeds the block area "
                            f"({buildable / (W * H):.3f} of the map)")
    if target > 0:
        q = target / buildable
        owed = 0.0
        for x0, x1, y0, y1 in blocks:
            bw, bh = x1 - x0, y1 - y0
            want = q * bw * bh + owed
            aspect = math.exp(rng.uniform(-0.5, 0.5))
            w = int(min(bw, max(1, round(math.sqrt(max(want, 0.0) * aspect)))))
            h = int(min(bh, max(1, round(want / w)))) if want >= 0.5 else 0
            if h:
                ox = x0 + int(rng.integers(0, bw - w + 1))
                oy = y0 + int(rng.integers(0, bh - h + 1))
                cells[oy:oy + h, ox:ox + w] = int(RegionCode.BUILDING)
            owed = want - (w * h if h else 0)

    yy, xx = np.mgrid[0:H, 0:W]

    def scatter(code, count):
        for _ in range(count):
            cx, cy = rng.integers(0, W), rng.integers(0, H)
            r = recipe.patch_radius
            disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
            cells[disc & (cells == int(RegionCode.OPEN_SPACE))] = code
        if count and not np.any(cells == code):
            free = np.flatnonzero(cells == int(RegionCode.OPEN_SPACE))
            if free.size:
                cells.flat[free[int(rng.integers(0, free.size))]] = code

    scatter(int(RegionCode.FOLIAGE), recipe.foliage_patches)
    scatter(int(RegionCode.WATER), recipe.water_patches)
    return RegionMap(W, H, recipe.cell_size, GeoPoint(recipe.origin_lat, recipe.origin_lon), cells)


@dataclass(frozen=True, eq=False)
class SynthSpec:
    region_map: RegionMap
    tx: GeoPoint
    true_params: ModelParams
    freqs: tuple[float, ...] = (0.85, 2.1, 5.0)
    rx_resolution: float = 5.0
    seed: int = 0
    d0: float = DEFAULT_D0
    tx_height: float = 30.0
    rx_height: float = 1.5
    distance_range: tuple[float, float] = (0.0, math.inf)
    tag: str = ""
    include_indoor: bool = False

    def __post_init__(self):
        if not self.rx_resolution > 0:
            raise ValueError("rx_resolution must be positive")
        if not self.freqs:
            raise ValueError("freqs must be nonempty")
        if any(f <= 0 for f in self.freqs):
            raise ValueError("frequencies must be positive (GHz)")


@dataclass
class SynthResult:
    dataset: RawDataset
    skips: Counter = field(default_factory=Counter)
    candidates: int = 0

    @property
    def skip_count(self) -> int:
        return sum(self.skips.values())


def rx_grid(region_map: RegionMap, resolution: float) -> list[tuple[float, float]]:
    """Receiver positions (planar) on a regular grid, north row first."""
    n_x = max(1, int(round(region_map.extent[0] / resolution)))
    n_y = max(1, int(round(region_map.extent[1] / resolution)))
    xs = [(i + 0.5) * region_map.extent[0] / n_x for i in range(n_x)]
    ys = [(j + 0.5) * region_map.extent[1] / n_y for j in range(n_y)]
    return [(x, y) for y in reversed(ys) for x in xs]


def _mean(params, line, freq, d3):
    if isinstance(params, AmpleParams):
        D = collapse_line(line, params.M)
        return params.A + float(D @ np.asarray(params.n)) + line.p * params.X \
            + 10.0 * params.gamma * math.log10(freq)
    if isinstance(params, CiParams):
        return predict_ci(params, freq, d3)
    return predict_abg(params, freq, d3)


def generate_dataset(spec: SynthSpec) -> SynthResult:
    """Sample every grid receiver at every frequency.

    Shadowing draw k belongs to candidate link k (receiver-major, frequency
    minor) whether or not the link is kept, so skipping never shifts the
    noise of other links.
    """
    region_map = spec.region_map
    x0, y0 = geo_to_grid(region_map, spec.tx)
    positions = rx_grid(region_map, spec.rx_resolution)
    nf = len(spec.freqs)
    n_candidates = len(positions) * nf
    noise = np.random.Generator(np.random.Philox(spec.seed)).standard_normal(n_candidates)
    sigma = float(spec.true_params.sigma)
    dh = spec.tx_height - spec.rx_height
    lo, hi = spec.distance_range
    skips: Counter = Counter()
    points = []
    for i, (x1, y1) in enumerate(positions):
        ground = math.hypot(x1 - x0, y1 - y0)
        d3 = math.hypot(ground, dh)
        if not lo <= d3 <= hi:
            skips["distance_range"] += nf
            continue
        try:
            line, los = link_geometry_xy(region_map, x0, y0, x1, y1, spec.d0)
        except AmpleError as exc:
            skips[type(exc).__name__] += nf
            continue
        if line.rx_indoor and not spec.include_indoor:
            skips["rx_indoor"] += nf
            continue
        rx = region_map.grid_to_geo(x1, y1)
        for j, f in enumerate(spec.freqs):
            pl = _mean(spec.true_params, line, f, d3) + sigma * noise[i * nf + j]
            points.append(SamplePoint(tx=spec.tx, rx=rx, distance3d=d3, freq=float(f),
                                      path_loss=float(pl), los=los, line=line, tag=spec.tag))
    dataset = RawDataset(tuple(points), {"scenario": "synthetic", "city": spec.tag,
                                         "seed": spec.seed})
    return SynthResult(dataset, skips, n_candidates)


def place_tx(region_map: RegionMap, seed: int = 0, on_building: bool = True) -> GeoPoint:
    """Pick a transmitter site near the map center, on a rooftop if requested."""
    rng = np.random.default_rng(seed)
    ex, ey = region_map.extent
    want = int(RegionCode.BUILDING) if on_building else int(RegionCode.OPEN_SPACE)
    for radius in (0.1, 0.2, 0.3, 0.45):
        for _ in range(200):
            x = ex * (0.5 + rng.uniform(-radius, radius))
            y = ey * (0.5 + rng.uniform(-radius, radius))
            if region_map.code_at(x, y) == want:
                return region_map.grid_to_geo(x, y)
    return region_map.grid_to_geo(ex / 2, ey / 2)


def recipe_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def recipe_to_dict(recipe: MapRecipe) -> dict:
    return asdict(recipe)
