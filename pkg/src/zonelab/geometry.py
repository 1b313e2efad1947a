"""Polygonal regions: validation, GeoJSON reading, and rasterization.

Rasterization is a pixel-center even-odd test. Ties are resolved with a
half-open convention: a center lying exactly on a ring edge counts as
inside when the edge bounds the polygon from the left (smaller x) or the
top (larger y, i.e. the north side of a north-up raster), and outside on
the right/bottom. Horizontal edges never contribute crossings, which is
exactly what makes the convention consistent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .raster import Band, CATEGORICAL, Grid

QUERY = "query"
REFERENCE = "reference"


def _normalize_ring(ring) -> np.ndarray:
    """Closed float (n, 2) vertex array; raises on degenerate input."""
    pts = np.asarray(ring, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise GeometryError(f"ring must be a list of >= 3 (x, y) vertices, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("ring has non-finite vertices")
    if np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    distinct = np.unique(pts, axis=0)
    if distinct.shape[0] < 3:
        raise GeometryError("degenerate ring: fewer than 3 distinct vertices")
    # Collinear rings enclose no area; twice the signed area is the cross sum.
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
    if area2 == 0.0:
        raise GeometryError("degenerate ring: vertices are collinear")
    return np.vstack([pts, pts[:1]])


@dataclass(frozen=True)
class RegionGeometry:
    """One or more closed rings; holes fall out of the even-odd rule."""

    rings: tuple[np.ndarray, ...]
    role: str = QUERY

    def __post_init__(self):
        if self.role not in (QUERY, REFERENCE):
            raise GeometryError(f"unknown region role {self.role!r}")
        if not self.rings:
            raise GeometryError("region needs at least one ring")
        object.__setattr__(self, "rings", tuple(_normalize_ring(r) for r in self.rings))

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.vstack(self.rings)
        return (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )

    def with_role(self, role: str) -> "RegionGeometry":
        return RegionGeometry(self.rings, role)

    def to_geojson(self) -> dict:
        return {
            "type": "MultiPolygon",
            "coordinates": [[[list(map(float, p)) for p in ring]] for ring in self.rings],
        }


def contains_points(rings, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd containment of the points (xs[j], ys[i]) on the lattice grid.

    Returns a (len(ys), len(xs)) boolean array. Crossing test uses a ray in
    +x direction; the half-open y comparison (>=) makes top edges inclusive
    and the strict x comparison makes left edges inclusive.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    crossings = np.zeros((ys.size, xs.size), dtype=np.int64)
    for ring in rings:
        x0, y0 = ring[:-1, 0], ring[:-1, 1]
        x1, y1 = ring[1:, 0], ring[1:, 1]
        for ex0, ey0, ex1, ey1 in zip(x0, y0, x1, y1):
            if ey0 == ey1:
                continue
            straddles = (ey0 >= ys) != (ey1 >= ys)  # (n_rows,)
            if not straddles.any():
                continue
            yr = ys[straddles]
            xinters = (yr - ey0) * (ex1 - ex0) / (ey1 - ey0) + ex0
            hit = xs[None, :] < xinters[:, None]
            crossings[straddles] += hit
    return (crossings % 2) == 1


def rasterize(region: RegionGeometry, grid: Grid) -> Band:
    """0/1 categorical band: 1 where the pixel center is inside the region."""
    xs, ys = grid.pixel_centers()
    inside = contains_points(region.rings, xs, ys)
    return Band(
        grid,
        inside.astype(np.float64),
        np.ones(grid.shape, dtype=bool),
        kind=CATEGORICAL,
        name=f"region:{region.role}",
    )


# ---------------------------------------------------------------------------
# GeoJSON interchange
# ---------------------------------------------------------------------------


def _rings_from_polygon(coords) -> list:
    if not isinstance(coords, list) or not coords:
        raise GeometryError("Polygon coordinates must be a non-empty list of rings")
    return list(coords)


def geometry_from_geojson(obj, role: str = QUERY) -> RegionGeometry:
    """Build a region from a GeoJSON Geometry/Feature/FeatureCollection.

    Only polygonal geometry is accepted; every ring (outer rings and holes
    alike) feeds the even-odd test.
    """
    if not isinstance(obj, dict):
        raise GeometryError("geometry must be a JSON object")
    gtype = obj.get("type")
    if gtype == "Feature":
        return geometry_from_geojson(obj.get("geometry"), role)
    if gtype == "FeatureCollection":
        feats = obj.get("features") or []
        rings = []
        for f in feats:
            rings.extend(geometry_from_geojson(f, role).rings)
        if not rings:
            raise GeometryError("FeatureCollection holds no polygonal features")
        return RegionGeometry(tuple(rings), role)
    if gtype == "Polygon":
        return RegionGeometry(tuple(_rings_from_polygon(obj.get("coordinates"))), role)
    if gtype == "MultiPolygon":
        coords = obj.get("coordinates")
        if not isinstance(coords, list) or not coords:
            raise GeometryError("MultiPolygon coordinates must be a non-empty list")
        rings = []
        for poly in coords:
            rings.extend(_rings_from_polygon(poly))
        return RegionGeometry(tuple(rings), role)
    raise GeometryError(f"polygonal geometry required, got {gtype!r}")


def read_geometry(source, role: str = QUERY) -> RegionGeometry:
    """Read a region from a GeoJSON file path, text, or parsed object."""
    if isinstance(source, dict):
        return geometry_from_geojson(source, role)
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"malformed geometry JSON: {exc}") from exc
    return geometry_from_geojson(obj, role)
