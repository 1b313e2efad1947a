"""Single-band GeoTIFF reading and writing via tifffile.

Supported sample types are float32 (continuous) and int32 (categorical).
Georeferencing is carried by the ModelPixelScale + ModelTiepoint tags and a
minimal GeoKey directory; the full CRS id string rides in the GeoTIFF
citation key so write -> read restores it verbatim even for non-EPSG ids.
Nodata uses the GDAL ASCII convention: NaN for float bands, INT32_MIN for
integer bands.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np
import tifffile

from .errors import RasterFormatError
from .raster import Band, CATEGORICAL, CONTINUOUS, Grid

TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GEO_ASCII_PARAMS = 34737
TAG_GDAL_NODATA = 42113

_KEY_MODEL_TYPE = 1024
_KEY_RASTER_TYPE = 1025
_KEY_CITATION = 1026
_KEY_GEOGRAPHIC_CS = 2048
_KEY_PROJECTED_CS = 3072

_INT_NODATA = np.int32(np.iinfo(np.int32).min)


def _epsg_code(crs_id: str) -> int | None:
    head, _, tail = crs_id.partition(":")
    if head.strip().upper() == "EPSG" and tail.strip().isdigit():
        return int(tail.strip())
    return None


def _geo_key_directory(crs_id: str) -> tuple[tuple, str]:
    """(GeoKeyDirectory shorts, ascii params) for a CRS id string."""
    citation = crs_id + "|"
    code = _epsg_code(crs_id)
    geographic = code is not None and 4000 <= code <= 4999
    keys = [
        (_KEY_MODEL_TYPE, 0, 1, 2 if geographic else 1),
        (_KEY_RASTER_TYPE, 0, 1, 1),  # PixelIsArea
        (_KEY_CITATION, TAG_GEO_ASCII_PARAMS, len(citation), 0),
    ]
    if code is not None:
        keys.append((_KEY_GEOGRAPHIC_CS if geographic else _KEY_PROJECTED_CS, 0, 1, code))
    header = (1, 1, 0, len(keys))
    flat = header + tuple(v for key in keys for v in key)
    return flat, citation


def write_raster(band: Band, target) -> None:
    """Write a band as single-band GeoTIFF to a path or binary file object."""
    if band.kind == CATEGORICAL:
        if band.mask.any():
            valid = band.values[band.mask]
            if valid.min() < np.iinfo(np.int32).min + 1 or valid.max() > np.iinfo(np.int32).max:
                raise RasterFormatError("categorical values do not fit int32")
        arr = np.where(band.mask, band.values, float(_INT_NODATA)).astype(np.int32)
        nodata_text = str(int(_INT_NODATA))
    else:
        arr = band.values.astype(np.float32)
        arr[~band.mask] = np.nan
        nodata_text = "nan"

    keys, citation = _geo_key_directory(band.grid.crs_id)
    grid = band.grid
    extratags = [
        (TAG_MODEL_PIXEL_SCALE, "d", 3, (grid.pixel_size_x, grid.pixel_size_y, 0.0), True),
        (TAG_MODEL_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, grid.origin_x, grid.origin_y, 0.0), True),
        (TAG_GEO_KEY_DIRECTORY, "H", len(keys), keys, True),
        (TAG_GEO_ASCII_PARAMS, "s", 0, citation, True),
        (TAG_GDAL_NODATA, "s", 0, nodata_text, True),
    ]
    tifffile.imwrite(target, arr, photometric="minisblack", extratags=extratags)


def _read_crs(page) -> str:
    ascii_params = page.tags.get(TAG_GEO_ASCII_PARAMS)
    directory = page.tags.get(TAG_GEO_KEY_DIRECTORY)
    if ascii_params is not None and directory is not None:
        flat = directory.value
        text = ascii_params.value
        n = flat[3]
        for i in range(n):
            key, loc, count, offset = flat[4 + 4 * i : 8 + 4 * i]
            if key == _KEY_CITATION and loc == TAG_GEO_ASCII_PARAMS:
                return text[offset : offset + count].rstrip("|\x00")
    if directory is not None:
        flat = directory.value
        n = flat[3]
        for i in range(n):
            key, loc, count, value = flat[4 + 4 * i : 8 + 4 * i]
            if key in (_KEY_GEOGRAPHIC_CS, _KEY_PROJECTED_CS) and loc == 0:
                return f"EPSG:{value}"
    raise RasterFormatError("raster has no CRS information")


def read_raster(source, name: str = "") -> Band:
    """Read a single-band GeoTIFF from a path or binary file object."""
    try:
        with tifffile.TiffFile(source) as tf:
            page = tf.pages[0]
            arr = page.asarray()
            tags = page.tags
            scale = tags[TAG_MODEL_PIXEL_SCALE].value if TAG_MODEL_PIXEL_SCALE in tags else None
            tiepoint = tags[TAG_MODEL_TIEPOINT].value if TAG_MODEL_TIEPOINT in tags else None
            transform = (
                tags[TAG_MODEL_TRANSFORMATION].value if TAG_MODEL_TRANSFORMATION in tags else None
            )
            nodata_text = tags[TAG_GDAL_NODATA].value if TAG_GDAL_NODATA in tags else None

            if arr.ndim != 2:
                raise RasterFormatError(
                    f"expected a single-band raster, got shape {arr.shape}"
                )
            if arr.dtype == np.float32:
                kind = CONTINUOUS
            elif arr.dtype == np.int32:
                kind = CATEGORICAL
            else:
                raise RasterFormatError(
                    f"unsupported sample type {arr.dtype}; expected float32 or int32"
                )
            crs_id = _read_crs(page)
    except RasterFormatError:
        raise
    except Exception as exc:
        raise RasterFormatError(f"unreadable raster: {exc}") from exc

    if transform is not None and (scale is None or tiepoint is None):
        m = np.asarray(transform, dtype=np.float64).reshape(4, 4)
        if m[0, 1] != 0.0 or m[1, 0] != 0.0:
            raise RasterFormatError("rotated rasters are not supported")
        px, py = m[0, 0], -m[1, 1]
        ox, oy = m[0, 3], m[1, 3]
    elif scale is not None and tiepoint is not None:
        px, py = float(scale[0]), float(scale[1])
        i, j, ox, oy = tiepoint[0], tiepoint[1], tiepoint[3], tiepoint[4]
        ox = float(ox) - i * px
        oy = float(oy) + j * py
    else:
        raise RasterFormatError("raster is missing georeferencing tags")

    grid = Grid(crs_id, float(ox), float(oy), float(px), float(py), arr.shape[1], arr.shape[0])

    nodata = None
    if nodata_text is not None:
        try:
            nodata = float(str(nodata_text).strip().rstrip("\x00").strip())
        except ValueError:
            nodata = None

    values = arr.astype(np.float64)
    mask = np.isfinite(values)
    if nodata is not None and not math.isnan(nodata):
        mask &= values != nodata
    values = np.where(mask, values, 0.0)
    return Band(grid, values, mask, kind=kind, name=name)


def write_raster_atomic(band: Band, path: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(suffix=".tif", dir=directory)
    os.close(fd)
    try:
        write_raster(band, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def raster_bytes(band: Band) -> bytes:
    import io

    buf = io.BytesIO()
    write_raster(band, buf)
    return buf.getvalue()
