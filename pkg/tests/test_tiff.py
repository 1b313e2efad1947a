import io

import numpy as np
import pytest
import tifffile

from zonelab import Band, Grid, read_raster, write_raster, write_raster_atomic
from zonelab.errors import RasterFormatError

from conftest import CRS, make_band


def test_float_round_trip_bit_identical(tmp_path, rng):
    grid = Grid(CRS, 500.0, 700.0, 10.0, 10.0, 32, 24)
    values = rng.random(grid.shape).astype(np.float32).astype(np.float64)
    mask = rng.random(grid.shape) > 0.2
    band = Band(grid, np.where(mask, values, 0.0), mask, name="x")
    path = tmp_path / "band.tif"
    write_raster(band, str(path))
    back = read_raster(str(path))
    assert back.grid == grid
    assert back.kind == "continuous"
    assert np.array_equal(back.mask, mask)
    assert np.array_equal(back.values[mask], band.values[mask])


def test_categorical_round_trip(tmp_path, rng):
    grid = Grid(CRS, 0.0, 100.0, 5.0, 5.0, 16, 16)
    labels = rng.integers(1, 6, grid.shape).astype(np.float64)
    mask = rng.random(grid.shape) > 0.3
    band = Band(grid, np.where(mask, labels, 0.0), mask, kind="categorical", name="zones")
    path = tmp_path / "labels.tif"
    write_raster(band, str(path))
    back = read_raster(str(path))
    assert back.kind == "categorical"
    assert np.array_equal(back.mask, mask)
    assert np.array_equal(back.values[mask], labels[mask])
    assert np.all(back.values[back.mask] == np.floor(back.values[back.mask]))


def test_georeferencing_tags_inspectable(tmp_path):
    # Tag-level oracle: read the raw TIFF tags back without our reader.
    grid = Grid(CRS, 321.5, 987.25, 2.5, 3.5, 4, 3)
    band = make_band(grid, np.zeros(grid.shape))
    path = tmp_path / "geo.tif"
    write_raster(band, str(path))
    with tifffile.TiffFile(str(path)) as tf:
        tags = tf.pages[0].tags
        scale = tags[33550].value
        tiepoint = tags[33922].value
        keys = tags[34735].value
        ascii_params = tags[34737].value
    assert scale[0] == 2.5 and scale[1] == 3.5
    assert tiepoint[3] == 321.5 and tiepoint[4] == 987.25
    assert keys[0:3] == (1, 1, 0)
    assert CRS in ascii_params
    # EPSG:32735 is projected: the projected-CS key must carry the code
    flat = list(keys)
    n = flat[3]
    entries = {flat[4 + 4 * i]: flat[4 + 4 * i + 3] for i in range(n)}
    assert entries[1024] == 1  # projected model
    assert entries[3072] == 32735


def test_geographic_crs_key(tmp_path):
    grid = Grid("EPSG:4326", 30.0, -1.0, 0.01, 0.01, 4, 4)
    band = make_band(grid, np.zeros(grid.shape))
    path = tmp_path / "geo.tif"
    write_raster(band, str(path))
    back = read_raster(str(path))
    assert back.grid.crs_id == "EPSG:4326"
    with tifffile.TiffFile(str(path)) as tf:
        flat = list(tf.pages[0].tags[34735].value)
    n = flat[3]
    entries = {flat[4 + 4 * i]: flat[4 + 4 * i + 3] for i in range(n)}
    assert entries[1024] == 2  # geographic model
    assert entries[2048] == 4326


def test_non_epsg_crs_round_trips_via_citation(tmp_path):
    grid = Grid("LOCAL:custom-lattice", 0.0, 8.0, 1.0, 1.0, 8, 8)
    band = make_band(grid, np.ones(grid.shape))
    path = tmp_path / "custom.tif"
    write_raster(band, str(path))
    assert read_raster(str(path)).grid.crs_id == "LOCAL:custom-lattice"


def test_write_read_file_objects(rng):
    grid = Grid(CRS, 0.0, 8.0, 1.0, 1.0, 8, 8)
    band = make_band(grid, rng.random(grid.shape).astype(np.float32))
    buf = io.BytesIO()
    write_raster(band, buf)
    buf.seek(0)
    back = read_raster(buf)
    assert np.array_equal(back.values, band.values)


def test_unsupported_dtype_rejected(tmp_path):
    path = tmp_path / "wide.tif"
    tifffile.imwrite(str(path), np.zeros((4, 4), dtype=np.float64))
    with pytest.raises(RasterFormatError, match="unsupported sample type"):
        read_raster(str(path))


def test_missing_georeferencing_rejected(tmp_path):
    path = tmp_path / "plain.tif"
    tifffile.imwrite(str(path), np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(RasterFormatError, match="CRS"):
        read_raster(str(path))


def test_multiband_rejected(tmp_path):
    path = tmp_path / "rgb.tif"
    tifffile.imwrite(str(path), np.zeros((4, 4, 3), dtype=np.float32), photometric="rgb")
    with pytest.raises(RasterFormatError):
        read_raster(str(path))


def test_atomic_write_replaces(tmp_path, rng):
    grid = Grid(CRS, 0.0, 8.0, 1.0, 1.0, 8, 8)
    path = tmp_path / "out.tif"
    first = make_band(grid, np.zeros(grid.shape))
    second = make_band(grid, np.ones(grid.shape))
    write_raster_atomic(first, str(path))
    write_raster_atomic(second, str(path))
    assert read_raster(str(path)).values.max() == 1.0
    assert [p.name for p in tmp_path.iterdir()] == ["out.tif"]


def test_all_nodata_band_round_trips(tmp_path):
    grid = Grid(CRS, 0.0, 4.0, 1.0, 1.0, 4, 4)
    band = Band(grid, np.zeros(grid.shape), np.zeros(grid.shape, dtype=bool), name="void")
    path = tmp_path / "void.tif"
    write_raster(band, str(path))
    assert not read_raster(str(path)).mask.any()


# ---------------------------------------------------------------------------
# Property: write/read are mutually inverse on the supported domain
# ---------------------------------------------------------------------------

from hypothesis import given, settings
from hypothesis import strategies as st


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    kind=st.sampled_from(["continuous", "categorical"]),
    width=st.integers(min_value=1, max_value=12),
    height=st.integers(min_value=1, max_value=12),
)
def test_round_trip_property(tmp_path_factory, seed, kind, width, height):
    rng = np.random.default_rng(seed)
    grid = Grid(
        CRS,
        float(rng.integers(-1000, 1000)),
        float(rng.integers(-1000, 1000)),
        float(rng.integers(1, 50)),
        float(rng.integers(1, 50)),
        width,
        height,
    )
    if kind == "continuous":
        values = rng.normal(0, 100, grid.shape).astype(np.float32).astype(np.float64)
    else:
        values = rng.integers(-5000, 5000, grid.shape).astype(np.float64)
    mask = rng.random(grid.shape) > 0.3
    band = Band(grid, np.where(mask, values, 0.0), mask, kind=kind, name="x")
    path = tmp_path_factory.mktemp("rt") / "band.tif"
    write_raster(band, str(path))
    back = read_raster(str(path))
    assert back.grid == grid
    assert back.kind == kind
    assert np.array_equal(back.mask, mask)
    assert np.array_equal(back.values[mask], band.values[mask])
