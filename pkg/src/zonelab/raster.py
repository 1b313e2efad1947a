"""Georeferenced grid model: grids, bands, feature stacks, resampling,
masking, and band statistics.

All rasters in a workflow share one CRS (a single catalog-wide CRS id);
there is no reprojection engine. A ``Grid`` fixes the pixel lattice:
``origin_x/origin_y`` is the outer corner of pixel (0, 0) and rows grow
southward, so the CRS y coordinate of a pixel center decreases with the
row index.

Bands are immutable after construction and safe to share across threads.
Nodata is tracked as an explicit boolean validity mask, never as a magic
value inside ``values``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, CrsMismatchError, EmptyDomainError, GridMismatchError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Grid:
    """Pixel lattice: CRS id, outer corner of pixel (0,0), pixel sizes, shape.

    Two grids are compatible iff all fields are equal; every multi-band
    operation requires compatibility.
    """

    crs_id: str
    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid shape must be >= 1x1, got {self.width}x{self.height}")
        for name in ("pixel_size_x", "pixel_size_y"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if not (np.isfinite(self.origin_x) and np.isfinite(self.origin_y)):
            raise ValueError("grid origin must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height

    def bounds(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the covered area in CRS units."""
        return (
            self.origin_x,
            self.origin_y - self.height * self.pixel_size_y,
            self.origin_x + self.width * self.pixel_size_x,
            self.origin_y,
        )

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """CRS coordinates of pixel centers as 1-D arrays (xs, ys)."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.pixel_size_x
        ys = self.origin_y - (np.arange(self.height) + 0.5) * self.pixel_size_y
        return xs, ys

    @staticmethod
    def cover(crs_id: str, bounds: tuple[float, float, float, float], resolution: float) -> "Grid":
        """Smallest grid at ``resolution`` whose origin is snapped to the
        resolution lattice and which covers ``bounds``.

        Snapping makes the grid a pure function of (bounds, resolution), so
        independent runs over the same region land on identical lattices.
        """
        min_x, min_y, max_x, max_y = bounds
        if not (max_x > min_x and max_y > min_y):
            raise ValueError(f"degenerate bounds {bounds}")
        ox = np.floor(min_x / resolution) * resolution
        oy = np.ceil(max_y / resolution) * resolution
        width = int(np.ceil((max_x - ox) / resolution))
        height = int(np.ceil((oy - min_y) / resolution))
        return Grid(crs_id, float(ox), float(oy), resolution, resolution, width, height)


def _check_compatible(a: Grid, b: Grid, what: str = "operation"):
    if a != b:
        raise GridMismatchError(f"{what} requires identical grids, got {a} vs {b}")


@dataclass(frozen=True)
class Band:
    """Single raster band on a grid.

    ``values`` is a float64 (height, width) array; ``mask`` is True where the
    pixel is valid. Categorical bands hold integral values at valid pixels.
    """

    grid: Grid
    values: np.ndarray
    mask: np.ndarray
    kind: str = CONTINUOUS
    name: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if mask.shape != self.grid.shape:
            mask = mask.reshape(self.grid.shape)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown band kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            valid = values[mask]
            if valid.size and not np.all(valid == np.floor(valid)):
                raise ValueError("categorical band holds non-integral values")

    @staticmethod
    def full(grid: Grid, value: float, kind: str = CONTINUOUS, name: str = "") -> "Band":
        return Band(
            grid,
            np.full(grid.shape, value, dtype=np.float64),
            np.ones(grid.shape, dtype=bool),
            kind=kind,
            name=name,
        )

    def with_name(self, name: str) -> "Band":
        return Band(self.grid, self.values, self.mask, kind=self.kind, name=name)

    def valid_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class FeatureStack:
    """Ordered set of continuous bands on one grid with unique names.

    A pixel is stack-valid iff it is valid in every band (conjunctive
    nodata): analysis needs a complete feature vector per pixel.
    """

    grid: Grid
    bands: tuple[Band, ...]

    def __post_init__(self):
        bands = tuple(self.bands)
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise ValueError("feature stack needs at least one band")
        names = [b.name for b in bands]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate band names in stack: {names}")
        for b in bands:
            if b.kind != CONTINUOUS:
                raise ValueError(f"stack band {b.name!r} is not continuous")
            _check_compatible(self.grid, b.grid, f"stacking band {b.name!r}")

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.bands]

    def valid_mask(self) -> np.ndarray:
        mask = np.ones(self.grid.shape, dtype=bool)
        for b in self.bands:
            mask &= b.mask
        return mask

    def vectors(self, where: np.ndarray) -> np.ndarray:
        """(n, n_bands) matrix of feature vectors at the True pixels of ``where``."""
        return np.stack([b.values[where] for b in self.bands], axis=1)


@dataclass(frozen=True)
class BandStats:
    count: int
    min: float
    max: float
    mean: float
    std: float
    histogram: np.ndarray = field(repr=False)
    bin_edges: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "std": self.std,
            "histogram": [int(c) for c in self.histogram],
            "bin_edges": [float(e) for e in self.bin_edges],
        }


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _source_fractional_indices(source: Grid, target: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fractional (col, row) source indices of target pixel centers plus a
    coverage mask (center inside the source extent)."""
    xs, ys = target.pixel_centers()
    u = (xs - source.origin_x) / source.pixel_size_x - 0.5
    v = (source.origin_y - ys) / source.pixel_size_y - 0.5
    cov_x = (xs >= source.origin_x) & (xs <= source.origin_x + source.width * source.pixel_size_x)
    cov_y = (ys <= source.origin_y) & (ys >= source.origin_y - source.height * source.pixel_size_y)
    covered = cov_y[:, None] & cov_x[None, :]
    return u, v, covered


def resample(band: Band, target: Grid) -> Band:
    """Resample ``band`` onto ``target``.

    Continuous bands are sampled bilinearly at target pixel centers with the
    interpolation weights renormalized over valid source contributors, so a
    target pixel is nodata only when every contributing pixel is nodata.
    Categorical bands use nearest-neighbor. Pixel centers outside the source
    extent are nodata; coordinates inside are clamped to the center lattice
    (edge values extend half a pixel).
    """
    if band.grid.crs_id != target.crs_id:
        raise CrsMismatchError(
            f"cannot resample across CRS: band is {band.grid.crs_id!r}, target is {target.crs_id!r}"
        )
    if band.grid == target:
        return Band(target, band.values.copy(), band.mask.copy(), kind=band.kind, name=band.name)

    src = band.grid
    u, v, covered = _source_fractional_indices(src, target)

    if band.kind == CATEGORICAL:
        ci = np.clip(np.rint(u).astype(np.int64), 0, src.width - 1)
        ri = np.clip(np.rint(v).astype(np.int64), 0, src.height - 1)
        values = band.values[ri[:, None], ci[None, :]]
        mask = band.mask[ri[:, None], ci[None, :]] & covered
        values = np.where(mask, values, 0.0)
        return Band(target, values, mask, kind=band.kind, name=band.name)

    uc = np.clip(u, 0.0, src.width - 1.0)
    vc = np.clip(v, 0.0, src.height - 1.0)
    c0 = np.floor(uc).astype(np.int64)
    r0 = np.floor(vc).astype(np.int64)
    c1 = np.minimum(c0 + 1, src.width - 1)
    r1 = np.minimum(r0 + 1, src.height - 1)
    fx = uc - c0
    fy = vc - r0

    wsum = np.zeros(target.shape, dtype=np.float64)
    acc = np.zeros(target.shape, dtype=np.float64)
    corners = (
        (r0, c0, (1.0 - fy)[:, None] * (1.0 - fx)[None, :]),
        (r0, c1, (1.0 - fy)[:, None] * fx[None, :]),
        (r1, c0, fy[:, None] * (1.0 - fx)[None, :]),
        (r1, c1, fy[:, None] * fx[None, :]),
    )
    for rows, cols, w in corners:
        vals = band.values[rows[:, None], cols[None, :]]
        valid = band.mask[rows[:, None], cols[None, :]]
        w = np.where(valid, w, 0.0)
        acc += w * np.where(valid, vals, 0.0)
        wsum += w

    mask = covered & (wsum > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(mask, acc / np.where(wsum > 0.0, wsum, 1.0), 0.0)
    return Band(target, values, mask, kind=band.kind, name=band.name)


# ---------------------------------------------------------------------------
# Masking and statistics
# ---------------------------------------------------------------------------


def apply_mask(stack: FeatureStack, mask: Band) -> FeatureStack:
    """Restrict a stack to pixels where ``mask`` equals 1; everything else
    becomes nodata in every band. Values are left untouched."""
    if mask.kind != CATEGORICAL:
        raise AnalysisError(f"mask band {mask.name!r} must be categorical")
    _check_compatible(stack.grid, mask.grid, "apply_mask")
    keep = mask.mask & (mask.values == 1.0)
    bands = tuple(
        Band(b.grid, b.values, b.mask & keep, kind=b.kind, name=b.name) for b in stack.bands
    )
    return FeatureStack(stack.grid, bands)


def band_statistics(band: Band, region_mask: Band | None = None, bins: int = 32) -> BandStats:
    """Count/min/max/mean/population-std plus a fixed-width histogram over
    the valid (and masked-in) pixels.

    When min == max every sample lands in the first bin and all edges
    collapse to that value.
    """
    select = band.mask
    if region_mask is not None:
        if region_mask.kind != CATEGORICAL:
            raise AnalysisError("region mask must be categorical")
        _check_compatible(band.grid, region_mask.grid, "band_statistics")
        select = select & region_mask.mask & (region_mask.values == 1.0)
    data = band.values[select]
    if data.size == 0:
        raise EmptyDomainError("empty statistics domain")
    lo = float(data.min())
    hi = float(data.max())
    if lo == hi:
        counts = np.zeros(bins, dtype=np.int64)
        counts[0] = data.size
        edges = np.full(bins + 1, lo)
    else:
        counts, edges = np.histogram(data, bins=bins, range=(lo, hi))
    return BandStats(
        count=int(data.size),
        min=lo,
        max=hi,
        mean=float(data.mean()),
        std=float(data.std()),
        histogram=counts,
        bin_edges=edges,
    )
