import datetime as dt

import numpy as np
import pytest

from zonelab import Band, Catalog, Grid, write_raster

CRS = "EPSG:32735"


@pytest.fixture
def grid8():
    return Grid(CRS, 0.0, 8.0, 1.0, 1.0, 8, 8)


@pytest.fixture
def grid64():
    return Grid(CRS, 0.0, 64.0, 1.0, 1.0, 64, 64)


def make_band(grid, values, mask=None, kind="continuous", name="b"):
    values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    return Band(grid, values, mask, kind=kind, name=name)


def random_band(grid, rng, name="b", low=0.0, high=1.0, holes=0.0):
    # float32 round-trips exactly through GeoTIFF encoding
    values = (low + rng.random(grid.shape) * (high - low)).astype(np.float32).astype(np.float64)
    mask = np.ones(grid.shape, dtype=bool)
    if holes > 0:
        mask = rng.random(grid.shape) >= holes
    return Band(grid, np.where(mask, values, 0.0), mask, name=name)


def build_catalog(root, entries, crs=CRS):
    """entries: iterable of (product, band_name, date, kind, Band)."""
    catalog = Catalog.create(str(root), crs)
    scratch = root / "_scratch"
    scratch.mkdir(exist_ok=True)
    for i, (product, band_name, date, kind, band) in enumerate(entries):
        path = scratch / f"src-{i}.tif"
        write_raster(band, str(path))
        catalog.ingest(product, band_name, date, kind, str(path))
    return catalog


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def date(y, m, d):
    return dt.date(y, m, d)


# ---------------------------------------------------------------------------
# End-to-end fixtures: a synthetic catalog with three planted zones
# ---------------------------------------------------------------------------

BLOB_CENTERS = [(0.0, 10.0, -5.0), (12.0, -8.0, 3.0), (-9.0, 2.0, 11.0)]


def planted_zone_array(width, height, n_zones):
    cols = np.arange(width)
    return np.repeat((cols * n_zones // width)[None, :], height, axis=0)


def blob_values(grid, band_index, zones, rng, sigma=0.6):
    arr = np.zeros(grid.shape)
    for z, center in enumerate(BLOB_CENTERS):
        where = zones == z
        arr[where] = center[band_index] + rng.normal(0.0, sigma, int(where.sum()))
    return arr.astype(np.float32).astype(np.float64)


def blob_catalog(root, rng, size=64, dates=(dt.date(2020, 1, 1), dt.date(2020, 7, 1))):
    """Catalog with product 'synth' bands b0..b2 sampled around three
    zone centers; returns (catalog, grid, zones)."""
    grid = Grid(CRS, 0.0, float(size), 1.0, 1.0, size, size)
    zones = planted_zone_array(size, size, 3)
    entries = []
    for b in range(3):
        for d in dates:
            band = Band(
                grid,
                blob_values(grid, b, zones, rng),
                np.ones(grid.shape, dtype=bool),
                name=f"b{b}",
            )
            entries.append(("synth", f"b{b}", d, "continuous", band))
    catalog = build_catalog(root, entries)
    return catalog, grid, zones


def blob_template_doc(k=3, seed=7, size=64):
    return {
        "version": 1,
        "name": "blobs",
        "crs_id": CRS,
        "target_resolution": 1.0,
        "regions": {
            "query": {
                "type": "Polygon",
                "coordinates": [[[0, 0], [size, 0], [size, size], [0, size], [0, 0]]],
            }
        },
        "aliases": [
            f"a{b}:synth:b{b}:01/01/2020:31/12/2020:MEAN" for b in range(3)
        ],
        "features": [f"f{b}:a{b}*1" for b in range(3)],
        "operation": {"cluster": {"k": k, "seed": seed}},
    }
