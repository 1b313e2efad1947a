"""The 6-field alias string: parse, canonical form, temporal evaluation.

    {name}:{product_id}:{band}:{start}:{end}:{aggregation}

The product id may contain '/' but never ':', so a plain split yields the
six fields. Dates are DD/MM/YYYY (canonical) with ISO-8601 accepted on
input. Aggregation is one of MEAN, SUM, MIN, MAX, LAST; evaluation is a
per-pixel reduction over every catalog entry in the date range after
resampling each onto the target grid.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog
from .errors import DslError, EmptyDomainError
from .raster import Band, CONTINUOUS, Grid, resample

AGGREGATIONS = ("MEAN", "SUM", "MIN", "MAX", "LAST")

IDENTIFIER_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class AliasSpec:
    name: str
    product_id: str
    band: str
    start: dt.date
    end: dt.date
    agg: str

    def canonical(self) -> str:
        return ":".join(
            (
                self.name,
                self.product_id,
                self.band,
                self.start.strftime("%d/%m/%Y"),
                self.end.strftime("%d/%m/%Y"),
                self.agg,
            )
        )


@dataclass(frozen=True)
class AliasLayer:
    spec: AliasSpec
    band: Band


def _parse_date(text: str, offset: int, what: str) -> dt.date:
    m = re.fullmatch(r"(\d{2})/(\d{2})/(\d{4})", text)
    if m:
        day, month, year = (int(g) for g in m.groups())
        try:
            return dt.date(year, month, day)
        except ValueError as exc:
            raise DslError(f"invalid {what} {text!r}: {exc}", offset=offset)
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DslError(
            f"cannot parse {what} {text!r}: expected DD/MM/YYYY or YYYY-MM-DD", offset=offset
        )


def parse_alias(text: str) -> AliasSpec:
    """Parse one alias string; errors carry the byte offset of the bad field."""
    if not isinstance(text, str):
        raise DslError("alias must be a string", offset=0)
    parts = text.split(":")
    if len(parts) != 6:
        raise DslError(
            f"alias needs 6 ':'-separated fields "
            f"(name:product:band:start:end:aggregation), got {len(parts)}",
            offset=0,
        )
    offsets = []
    pos = 0
    for p in parts:
        offsets.append(pos)
        pos += len(p) + 1

    name, product_id, band, start_s, end_s, agg = parts
    if not IDENTIFIER_RE.fullmatch(name):
        raise DslError(
            f"bad alias name {name!r}: must match [A-Za-z][A-Za-z0-9_]*", offset=offsets[0]
        )
    if not product_id:
        raise DslError("empty product id", offset=offsets[1])
    if not band:
        raise DslError("empty band name", offset=offsets[2])
    start = _parse_date(start_s, offsets[3], "start date")
    end = _parse_date(end_s, offsets[4], "end date")
    if start > end:
        raise DslError(f"start date {start_s} is after end date {end_s}", offset=offsets[3])
    agg_up = agg.upper()
    if agg_up not in AGGREGATIONS:
        raise DslError(
            f"unknown aggregation {agg!r}: expected one of {', '.join(AGGREGATIONS)}",
            offset=offsets[5],
        )
    return AliasSpec(name, product_id, band, start, end, agg_up)


def parse_alias_corpus(texts: list[str]) -> list[AliasSpec]:
    """Parse a batch; on any failure, report every bad line at once."""
    specs = []
    failures = []
    for i, text in enumerate(texts):
        try:
            specs.append(parse_alias(text))
        except DslError as exc:
            failures.append(f"line {i}: {exc.message}")
    if failures:
        raise DslError("invalid alias lines: " + "; ".join(failures))
    return specs


def evaluate_alias(spec: AliasSpec, catalog: Catalog, target: Grid) -> AliasLayer:
    """Load, resample, and reduce every matching catalog entry.

    A pixel is nodata iff no entry is valid there. LAST takes the value of
    the latest-dated entry that is valid at each pixel, so partially masked
    stacks still produce a total layer.
    """
    entries = catalog.query(spec.product_id, spec.band, spec.start, spec.end)
    if not entries:
        raise EmptyDomainError(
            f"no images for alias {spec.name} in "
            f"[{spec.start.isoformat()},{spec.end.isoformat()}]"
        )

    acc = np.zeros(target.shape, dtype=np.float64)
    count = np.zeros(target.shape, dtype=np.int64)
    if spec.agg == "MIN":
        out = np.full(target.shape, np.inf)
    elif spec.agg == "MAX":
        out = np.full(target.shape, -np.inf)
    else:
        out = np.zeros(target.shape, dtype=np.float64)
    seen = np.zeros(target.shape, dtype=bool)

    for entry in entries:  # ascending by timestamp
        layer = resample(catalog.load_band(entry), target)
        v, m = layer.values, layer.mask
        if spec.agg in ("MEAN", "SUM"):
            acc[m] += v[m]
            count[m] += 1
        elif spec.agg == "MIN":
            np.minimum(out, v, out=out, where=m)
        elif spec.agg == "MAX":
            np.maximum(out, v, out=out, where=m)
        elif spec.agg == "LAST":
            out[m] = v[m]
        seen |= m

    if spec.agg == "MEAN":
        out = np.where(seen, acc / np.maximum(count, 1), 0.0)
    elif spec.agg == "SUM":
        out = np.where(seen, acc, 0.0)
    else:
        out = np.where(seen, out, 0.0)

    band = Band(target, out, seen, kind=CONTINUOUS, name=spec.name)
    return AliasLayer(spec, band)
