"""PNG rendering of bands: 8-bit RGBA, nodata fully transparent.

Continuous bands get a perceptually ordered (viridis-like) ramp stretched
over [min, max]; the default range is the 2nd..98th percentile of the
valid pixels. Categorical bands get stable distinct colors keyed by the
label value, so the same label renders the same color regardless of which
other labels are present.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import AnalysisError, EmptyDomainError
from .raster import Band, CATEGORICAL

_RAMP_ANCHORS = np.array(
    [
        (68, 1, 84),
        (72, 24, 106),
        (71, 45, 123),
        (66, 64, 134),
        (59, 82, 139),
        (51, 99, 141),
        (44, 114, 142),
        (38, 130, 142),
        (33, 145, 140),
        (31, 160, 136),
        (40, 174, 128),
        (63, 188, 115),
        (94, 201, 98),
        (132, 212, 75),
        (173, 220, 48),
        (216, 226, 25),
        (253, 231, 37),
    ],
    dtype=np.float64,
)

CATEGORICAL_PALETTE = np.array(
    [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (140, 86, 75),
        (227, 119, 194),
        (127, 127, 127),
        (188, 189, 34),
        (23, 190, 207),
        (174, 199, 232),
        (255, 187, 120),
        (152, 223, 138),
        (255, 152, 150),
        (197, 176, 213),
        (196, 156, 148),
        (247, 182, 210),
        (199, 199, 199),
        (219, 219, 141),
        (158, 218, 229),
    ],
    dtype=np.uint8,
)


def _ramp_lut() -> np.ndarray:
    """256-entry RGB lookup interpolated from the anchors."""
    xs = np.linspace(0.0, 1.0, len(_RAMP_ANCHORS))
    t = np.linspace(0.0, 1.0, 256)
    lut = np.empty((256, 3), dtype=np.uint8)
    for c in range(3):
        lut[:, c] = np.rint(np.interp(t, xs, _RAMP_ANCHORS[:, c])).astype(np.uint8)
    return lut


_LUT = _ramp_lut()


def default_range(band: Band) -> tuple[float, float]:
    """[p2, p98] percentile stretch over valid pixels."""
    data = band.values[band.mask]
    if data.size == 0:
        raise EmptyDomainError("cannot derive a render range from an all-nodata band")
    lo, hi = np.percentile(data, [2.0, 98.0])
    return float(lo), float(hi)


def render_png(
    band: Band,
    palette: str | None = None,
    vmin: float | None = None,
    vmax: float | None = None,
) -> bytes:
    """Render a band to PNG bytes. ``palette`` defaults to the band kind.

    A degenerate range (min == max, e.g. a constant band) renders
    mid-palette. Explicit vmin must be strictly below vmax.
    """
    if band.grid.size == 0:
        raise AnalysisError("empty band")
    palette = palette or ("categorical" if band.kind == CATEGORICAL else "continuous")
    h, w = band.grid.shape
    rgba = np.zeros((h, w, 4), dtype=np.uint8)
    alpha = np.where(band.mask, 255, 0).astype(np.uint8)

    if palette == "categorical":
        labels = band.values.astype(np.int64)
        idx = np.mod(labels, len(CATEGORICAL_PALETTE))
        rgba[..., :3] = CATEGORICAL_PALETTE[idx]
    elif palette == "continuous":
        if vmin is not None and vmax is not None and not (vmin < vmax):
            raise AnalysisError(f"render range needs min < max, got [{vmin}, {vmax}]")
        if band.mask.any():
            if vmin is None or vmax is None:
                lo, hi = default_range(band)
                vmin = lo if vmin is None else vmin
                vmax = hi if vmax is None else vmax
            if vmax > vmin:
                t = (band.values - vmin) / (vmax - vmin)
                idx = np.clip(np.rint(t * 255.0), 0, 255).astype(np.int64)
                idx[~band.mask] = 0
            else:
                idx = np.full((h, w), 128, dtype=np.int64)
            rgba[..., :3] = _LUT[idx]
    else:
        raise AnalysisError(f"unknown palette {palette!r}")

    rgba[..., 3] = alpha
    image = Image.fromarray(rgba, mode="RGBA")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
