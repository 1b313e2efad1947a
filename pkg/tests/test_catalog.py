import datetime as dt
import json

import numpy as np
import pytest

from zonelab import Catalog, Grid, write_raster
from zonelab.errors import CatalogError, CrsMismatchError, DuplicateEntryError

from conftest import CRS, build_catalog, make_band, random_band


@pytest.fixture
def grid():
    return Grid(CRS, 0.0, 8.0, 1.0, 1.0, 8, 8)


def yearly_entries(grid, rng, product="p", band="b", years=range(2010, 2021)):
    return [
        (product, band, dt.date(year, 6, 1), "continuous", random_band(grid, rng))
        for year in years
    ]


def test_ingest_then_list_round_trip(tmp_path, grid, rng):
    catalog = build_catalog(tmp_path, [("soil/clay", "mean", dt.date(2020, 1, 1), "continuous", random_band(grid, rng))])
    rows = catalog.list_products()
    assert len(rows) == 1
    assert rows[0].product_id == "soil/clay"
    assert rows[0].bands == ("mean",)
    assert rows[0].start == rows[0].end == dt.date(2020, 1, 1)
    assert rows[0].kinds["mean"] == "continuous"


def test_duplicate_key_rejected_catalog_unchanged(tmp_path, grid, rng):
    band = random_band(grid, rng)
    catalog = build_catalog(tmp_path, [("p", "b", dt.date(2020, 1, 1), "continuous", band)])
    version_before = catalog.version
    src = tmp_path / "again.tif"
    write_raster(band, str(src))
    with pytest.raises(DuplicateEntryError) as err:
        catalog.ingest("p", "b", dt.date(2020, 1, 1), "continuous", str(src))
    assert "2020-01-01" in str(err.value)
    assert catalog.version == version_before
    assert len(catalog.entries) == 1


def test_query_ascending_dates(tmp_path, grid, rng):
    dates = [dt.date(2020, 3, 1), dt.date(2020, 1, 1), dt.date(2020, 2, 1)]
    catalog = build_catalog(
        tmp_path, [("p", "b", d, "continuous", random_band(grid, rng)) for d in dates]
    )
    got = catalog.query("p", "b", dt.date(2020, 1, 1), dt.date(2020, 12, 31))
    assert [e.timestamp for e in got] == sorted(dates)


def test_query_empty_range_and_exact_date(tmp_path, grid, rng):
    catalog = build_catalog(
        tmp_path, [("p", "b", dt.date(2020, 6, 15), "continuous", random_band(grid, rng))]
    )
    assert catalog.query("p", "b", dt.date(2021, 1, 1), dt.date(2021, 12, 31)) == []
    exact = catalog.query("p", "b", dt.date(2020, 6, 15), dt.date(2020, 6, 15))
    assert len(exact) == 1


def test_decade_range_returns_eleven(tmp_path, grid, rng):
    catalog = build_catalog(tmp_path, yearly_entries(grid, rng))
    got = catalog.query("p", "b", dt.date(2010, 1, 1), dt.date(2020, 12, 31))
    assert len(got) == 11


def test_query_matches_filter_oracle(tmp_path, grid, rng):
    catalog = build_catalog(tmp_path, yearly_entries(grid, rng))
    start, end = dt.date(2012, 1, 1), dt.date(2017, 12, 31)
    got = catalog.query("p", "b", start, end)
    expected = sorted(
        (e for e in catalog.entries if e.product_id == "p" and e.band == "b" and start <= e.timestamp <= end),
        key=lambda e: e.timestamp,
    )
    assert got == expected


def test_unknown_product_and_band_errors(tmp_path, grid, rng):
    catalog = build_catalog(
        tmp_path,
        [
            ("p", "b1", dt.date(2020, 1, 1), "continuous", random_band(grid, rng)),
            ("p", "b2", dt.date(2020, 1, 1), "continuous", random_band(grid, rng)),
        ],
    )
    with pytest.raises(CatalogError, match="unknown product"):
        catalog.query("nope", "b1", dt.date(2020, 1, 1), dt.date(2020, 1, 1))
    with pytest.raises(CatalogError) as err:
        catalog.query("p", "zzz", dt.date(2020, 1, 1), dt.date(2020, 1, 1))
    assert "b1" in str(err.value) and "b2" in str(err.value)


def test_reversed_range_rejected(tmp_path, grid, rng):
    catalog = build_catalog(tmp_path, yearly_entries(grid, rng))
    with pytest.raises(CatalogError):
        catalog.query("p", "b", dt.date(2020, 1, 2), dt.date(2020, 1, 1))


def test_ingest_round_trips_pixels_bit_exact(tmp_path, grid, rng):
    band = random_band(grid, rng, holes=0.2)
    catalog = build_catalog(tmp_path, [("p", "b", dt.date(2020, 1, 1), "continuous", band)])
    loaded = catalog.load_band(catalog.entries[0])
    assert np.array_equal(loaded.mask, band.mask)
    assert np.array_equal(loaded.values[loaded.mask], band.values[band.mask])


def test_crs_mismatch_rejected(tmp_path, grid):
    catalog = Catalog.create(str(tmp_path / "cat"), "EPSG:4326")
    src = tmp_path / "wrong.tif"
    write_raster(make_band(grid, np.zeros(grid.shape)), str(src))
    with pytest.raises(CrsMismatchError):
        catalog.ingest("p", "b", dt.date(2020, 1, 1), "continuous", str(src))


def test_kind_constant_per_product_band(tmp_path, grid, rng):
    catalog = build_catalog(tmp_path, [("p", "b", dt.date(2020, 1, 1), "continuous", random_band(grid, rng))])
    src = tmp_path / "next.tif"
    labels = make_band(grid, np.ones(grid.shape), kind="categorical")
    write_raster(labels, str(src))
    with pytest.raises(CatalogError, match="constant"):
        catalog.ingest("p", "b", dt.date(2021, 1, 1), "categorical", str(src))


def test_canonical_layout_and_index(tmp_path, grid, rng):
    catalog = build_catalog(
        tmp_path, [("soil/clay", "mean", dt.date(2020, 1, 5), "continuous", random_band(grid, rng))]
    )
    assert (tmp_path / "soil__clay" / "mean" / "2020-01-05.tif").exists()
    doc = json.loads((tmp_path / "index.json").read_text())
    assert doc["crs_id"] == CRS
    assert doc["entries"][0]["product_id"] == "soil/clay"
    assert doc["entries"][0]["timestamp"] == "2020-01-05"
    # reopened catalog sees the same state
    reopened = Catalog.open(str(tmp_path))
    assert reopened.entries == catalog.entries
    assert reopened.version == catalog.version


def test_empty_catalog_lists_nothing(tmp_path):
    catalog = Catalog.create(str(tmp_path / "cat"), CRS)
    assert catalog.list_products() == []


def test_three_products_sorted(tmp_path, grid, rng):
    entries = [
        (p, "b", dt.date(2020, 1, 1), "continuous", random_band(grid, rng))
        for p in ("zeta", "alpha", "mid")
    ]
    catalog = build_catalog(tmp_path, entries)
    assert [r.product_id for r in catalog.list_products()] == ["alpha", "mid", "zeta"]
