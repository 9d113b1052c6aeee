import numpy as np
import pytest

from ample import kernels
from ample.regionmap import GeoPoint, RegionMap

ORIGIN = GeoPoint(53.38, -1.49)


def make_map(cells, cell_size=1.0, origin=ORIGIN):
    cells = np.asarray(cells, dtype=np.int8)
    return RegionMap(cells.shape[1], cells.shape[0], cell_size, origin, cells)


def rle_oracle(region_map, x0, y0, x1, y1, step=0.01):
    """Run-length encode region codes sampled every ``step`` meters along a link."""
    total = np.hypot(x1 - x0, y1 - y0)
    n = max(1, int(np.ceil(total / step)))
    t = (np.arange(n) + 0.5) / n
    xs = x0 + t * (x1 - x0)
    ys = y0 + t * (y1 - y0)
    cs = region_map.cell_size
    ix = np.clip(np.floor(xs / cs).astype(int), 0, region_map.width - 1)
    iy = np.clip(np.floor(ys / cs).astype(int), 0, region_map.height - 1)
    codes = region_map._grid[iy, ix]
    runs = []
    for c in codes:
        if runs and runs[-1][0] == c:
            runs[-1][1] += 1
        else:
            runs.append([int(c), 1])
    return [(c, k * total / n) for c, k in runs]


@pytest.fixture
def strip_map():
    """OpenSpace 40 m | Building 20 m | OpenSpace 40 m along x, 1 m cells."""
    row = [2] * 40 + [1] * 20 + [2] * 40
    return make_map([row, row, row])


@pytest.fixture
def open_map():
    return make_map(np.full((20, 120), 2), cell_size=1.0)


@pytest.fixture(params=kernels.available())
def backend(request):
    prev = kernels.backend_name()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def random_map(seed, width=40, height=30, cell_size=5.0):
    rng = np.random.default_rng(seed)
    cells = rng.choice([1, 2, 3, 4], size=(height, width), p=[0.3, 0.5, 0.1, 0.1])
    return make_map(cells, cell_size=cell_size)
