"""Disk-backed raster catalog indexed by (product, band, timestamp).

Layout under the catalog root:

    index.json                                  # the whole index, one document
    <product id with '/' -> '__'>/<band>/<YYYY-MM-DD>.tif

The index is the source of truth and is rewritten atomically on every
ingest (write-new-then-rename), so readers never observe a torn file.
Ingestion takes an exclusive inter-process lock; reads are lock-free.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import shutil
import tempfile
from dataclasses import dataclass

import numpy as np
from filelock import FileLock

from .errors import CatalogError, CrsMismatchError, DuplicateEntryError, RasterFormatError
from .raster import Band, CATEGORICAL, CONTINUOUS, Grid
from .tiff import read_raster

INDEX_NAME = "index.json"


@dataclass(frozen=True)
class CatalogEntry:
    product_id: str
    band: str
    timestamp: dt.date
    kind: str
    path: str  # relative to the catalog root
    grid: Grid

    @property
    def key(self) -> tuple[str, str, dt.date]:
        return (self.product_id, self.band, self.timestamp)


@dataclass(frozen=True)
class ProductInfo:
    product_id: str
    bands: tuple[str, ...]
    start: dt.date
    end: dt.date
    kinds: dict

    def to_dict(self) -> dict:
        return {
            "product_id": self.product_id,
            "bands": list(self.bands),
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "kinds": dict(self.kinds),
        }


def _entry_to_record(entry: CatalogEntry) -> dict:
    g = entry.grid
    return {
        "product_id": entry.product_id,
        "band": entry.band,
        "timestamp": entry.timestamp.isoformat(),
        "kind": entry.kind,
        "path": entry.path,
        "grid": {
            "crs_id": g.crs_id,
            "origin_x": g.origin_x,
            "origin_y": g.origin_y,
            "pixel_size_x": g.pixel_size_x,
            "pixel_size_y": g.pixel_size_y,
            "width": g.width,
            "height": g.height,
        },
    }


def _entry_from_record(rec: dict) -> CatalogEntry:
    g = rec["grid"]
    return CatalogEntry(
        product_id=rec["product_id"],
        band=rec["band"],
        timestamp=dt.date.fromisoformat(rec["timestamp"]),
        kind=rec["kind"],
        path=rec["path"],
        grid=Grid(
            g["crs_id"],
            g["origin_x"],
            g["origin_y"],
            g["pixel_size_x"],
            g["pixel_size_y"],
            g["width"],
            g["height"],
        ),
    )


def product_dirname(product_id: str) -> str:
    return product_id.replace("/", "__")


class Catalog:
    """Local raster catalog. One CRS per catalog; no reprojection."""

    def __init__(self, root: str, crs_id: str, entries: list[CatalogEntry], version: int):
        self.root = os.path.abspath(root)
        self.crs_id = crs_id
        self.version = version
        self._entries = sorted(entries, key=lambda e: e.key)
        self._by_key = {e.key: e for e in self._entries}
        self._lock = FileLock(os.path.join(self.root, ".ingest.lock"))

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(cls, root: str, crs_id: str) -> "Catalog":
        os.makedirs(root, exist_ok=True)
        index_path = os.path.join(root, INDEX_NAME)
        if os.path.exists(index_path):
            raise CatalogError(f"catalog already exists at {root}")
        cat = cls(root, crs_id, [], version=0)
        cat._write_index()
        return cat

    @classmethod
    def open(cls, root: str) -> "Catalog":
        index_path = os.path.join(root, INDEX_NAME)
        try:
            with open(index_path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise CatalogError(f"no catalog index at {index_path}")
        except json.JSONDecodeError as exc:
            raise CatalogError(f"corrupt catalog index: {exc}")
        entries = [_entry_from_record(rec) for rec in doc["entries"]]
        return cls(root, doc["crs_id"], entries, version=int(doc.get("version", 0)))

    @classmethod
    def open_or_create(cls, root: str, crs_id: str | None = None) -> "Catalog":
        if os.path.exists(os.path.join(root, INDEX_NAME)):
            return cls.open(root)
        if crs_id is None:
            raise CatalogError(f"no catalog at {root} and no CRS given to create one")
        return cls.create(root, crs_id)

    def _write_index(self) -> None:
        doc = {
            "version": self.version,
            "crs_id": self.crs_id,
            "entries": [_entry_to_record(e) for e in self._entries],
        }
        fd, tmp = tempfile.mkstemp(prefix=".index-", suffix=".json", dir=self.root)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, ensure_ascii=False)
                fh.write("\n")
            os.replace(tmp, os.path.join(self.root, INDEX_NAME))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # -- queries ------------------------------------------------------------

    @property
    def entries(self) -> list[CatalogEntry]:
        return list(self._entries)

    def query(self, product_id: str, band: str, start: dt.date, end: dt.date) -> list[CatalogEntry]:
        """Entries with start <= timestamp <= end, ascending by timestamp."""
        if start > end:
            raise CatalogError(f"query start {start} is after end {end}")
        products = {e.product_id for e in self._entries}
        if product_id not in products:
            known = ", ".join(sorted(products)) or "<none>"
            raise CatalogError(f"unknown product {product_id!r}; catalog has: {known}")
        bands = {e.band for e in self._entries if e.product_id == product_id}
        if band not in bands:
            known = ", ".join(sorted(bands))
            raise CatalogError(f"unknown band {band!r} for product {product_id!r}; known bands: {known}")
        return [
            e
            for e in self._entries
            if e.product_id == product_id and e.band == band and start <= e.timestamp <= end
        ]

    def list_products(self) -> list[ProductInfo]:
        by_product: dict[str, list[CatalogEntry]] = {}
        for e in self._entries:
            by_product.setdefault(e.product_id, []).append(e)
        rows = []
        for product_id in sorted(by_product):
            group = by_product[product_id]
            bands = tuple(sorted({e.band for e in group}))
            kinds = {}
            for e in group:
                kinds[e.band] = e.kind
            rows.append(
                ProductInfo(
                    product_id=product_id,
                    bands=bands,
                    start=min(e.timestamp for e in group),
                    end=max(e.timestamp for e in group),
                    kinds=kinds,
                )
            )
        return rows

    def load_band(self, entry: CatalogEntry) -> Band:
        band = read_raster(os.path.join(self.root, entry.path), name=entry.band)
        if entry.kind == CATEGORICAL and band.kind != CATEGORICAL:
            band = Band(band.grid, band.values, band.mask, kind=CATEGORICAL, name=band.name)
        return band

    # -- ingestion ----------------------------------------------------------

    def ingest(
        self,
        product_id: str,
        band: str,
        timestamp: dt.date,
        kind: str,
        file_path: str,
    ) -> CatalogEntry:
        """Validate, copy under the canonical layout, and index a raster.

        The key must be new and the file must be a single-band raster in the
        catalog CRS; nothing is mutated when validation fails.
        """
        if kind not in (CONTINUOUS, CATEGORICAL):
            raise CatalogError(f"unknown kind {kind!r}")
        key = (product_id, band, timestamp)
        if key in self._by_key:
            raise DuplicateEntryError(
                f"catalog already has ({product_id}, {band}, {timestamp.isoformat()})"
            )
        for existing in self._entries:
            if existing.product_id == product_id and existing.band == band and existing.kind != kind:
                raise CatalogError(
                    f"({product_id}, {band}) is already registered as {existing.kind}; "
                    f"kind must be constant per product band"
                )
        parsed = read_raster(file_path)
        if parsed.grid.crs_id != self.crs_id:
            raise CrsMismatchError(
                f"raster CRS {parsed.grid.crs_id!r} does not match catalog CRS {self.crs_id!r}"
            )
        if kind == CATEGORICAL:
            valid = parsed.values[parsed.mask]
            if valid.size and not np.all(valid == np.floor(valid)):
                raise RasterFormatError("categorical ingest requires integral sample values")

        rel = os.path.join(product_dirname(product_id), band, f"{timestamp.isoformat()}.tif")
        with self._lock:
            if key in self._by_key:
                raise DuplicateEntryError(
                    f"catalog already has ({product_id}, {band}, {timestamp.isoformat()})"
                )
            dest = os.path.join(self.root, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            shutil.copyfile(file_path, dest)
            entry = CatalogEntry(product_id, band, timestamp, kind, rel, parsed.grid)
            self._entries.append(entry)
            self._entries.sort(key=lambda e: e.key)
            self._by_key[key] = entry
            self.version += 1
            self._write_index()
        return entry
