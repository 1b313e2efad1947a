"""End-to-end template execution: grid derivation, alias/feature
evaluation, optional land-cover masking, and the cluster or similarity
operation. The CLI and the HTTP service both run templates through this
module, which is what makes their outputs bit-identical for the same
template and catalog.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aliases import evaluate_alias, parse_alias
from .analysis import AnalysisResult, ClusterConfig, run_clustering, run_similarity
from .catalog import Catalog
from .errors import EmptyDomainError, PreconditionError
from .features import evaluate_feature, parse_feature
from .raster import Band, CATEGORICAL, FeatureStack, Grid, apply_mask, resample
from .template import Template


class Cancelled(Exception):
    """Raised inside execution when a cancel check fires."""


@dataclass
class RunOutput:
    result: AnalysisResult
    stack: FeatureStack
    grid: Grid


def _noop_progress(fraction: float, message: str) -> None:
    return None


def target_grid(template: Template) -> Grid:
    """Grid covering the query region (and the reference, for similarity)
    at the template's resolution, snapped to the resolution lattice."""
    min_x, min_y, max_x, max_y = template.query.bounds()
    if template.reference is not None:
        rx0, ry0, rx1, ry1 = template.reference.bounds()
        min_x, min_y = min(min_x, rx0), min(min_y, ry0)
        max_x, max_y = max(max_x, rx1), max(max_y, ry1)
    return Grid.cover(template.crs_id, (min_x, min_y, max_x, max_y), template.target_resolution)


def evaluate_landcover_mask(template: Template, catalog: Catalog, grid: Grid) -> Band:
    """0/1 mask selecting the configured land-cover classes.

    The latest valid observation per pixel decides the class (a LAST
    composite); class labels are compared exactly.
    """
    lc = template.landcover
    entries = catalog.query(lc.product, lc.band, lc.start, lc.end)
    if not entries:
        raise EmptyDomainError(
            f"no land-cover images for {lc.product}:{lc.band} in "
            f"[{lc.start.isoformat()},{lc.end.isoformat()}]"
        )
    values = np.zeros(grid.shape)
    seen = np.zeros(grid.shape, dtype=bool)
    for entry in entries:
        layer = resample(catalog.load_band(entry), grid)
        values[layer.mask] = layer.values[layer.mask]
        seen |= layer.mask
    selected = np.isin(values, np.asarray(lc.classes, dtype=np.float64)) & seen
    return Band(grid, selected.astype(np.float64), seen, kind=CATEGORICAL, name="landcover")


def build_stack(
    template: Template,
    catalog: Catalog,
    grid: Grid,
    progress=_noop_progress,
    cancel_check=None,
    layer_cache: dict | None = None,
    cache_key=None,
) -> FeatureStack:
    """Evaluate every alias then every feature onto ``grid``."""
    if not template.features:
        raise PreconditionError("template has no features to stack")

    def check():
        if cancel_check is not None and cancel_check():
            raise Cancelled()

    alias_specs = [parse_alias(text) for text in template.aliases]
    known = [s.name for s in alias_specs]
    feature_specs = [parse_feature(text, known) for text in template.features]

    layers = {}
    n_steps = len(alias_specs) + len(feature_specs) + 1
    for i, spec in enumerate(alias_specs):
        check()
        key = None
        if layer_cache is not None and cache_key is not None:
            key = cache_key(template.aliases[i], grid)
            if key in layer_cache:
                layers[spec.name] = layer_cache[key]
                progress((i + 1) / n_steps, f"alias {spec.name} (cached)")
                continue
        layer = evaluate_alias(spec, catalog, grid)
        layers[spec.name] = layer.band
        if key is not None:
            layer_cache[key] = layer.band
        progress((i + 1) / n_steps, f"alias {spec.name}")

    check()
    bands = []
    for j, spec in enumerate(feature_specs):
        check()
        bands.append(evaluate_feature(spec, layers, grid))
        progress((len(alias_specs) + j + 1) / n_steps, f"feature {spec.name}")
    stack = FeatureStack(grid, tuple(bands))

    if template.landcover is not None:
        stack = apply_mask(stack, evaluate_landcover_mask(template, catalog, grid))
    return stack


def execute_template(
    template: Template,
    catalog: Catalog,
    progress=_noop_progress,
    cancel_check=None,
    layer_cache: dict | None = None,
    cache_key=None,
) -> RunOutput:
    """Run the template's operation and return the result with its inputs."""
    grid = target_grid(template)
    stack = build_stack(
        template,
        catalog,
        grid,
        progress=progress,
        cancel_check=cancel_check,
        layer_cache=layer_cache,
        cache_key=cache_key,
    )
    if cancel_check is not None and cancel_check():
        raise Cancelled()
    progress(0.9, "running analysis")
    if isinstance(template.operation, ClusterConfig):
        result = run_clustering(stack, template.query, template.operation)
    else:
        if template.reference is None:
            raise PreconditionError("similarity operation requires a reference region")
        result = run_similarity(stack, template.query, template.reference, template.operation)
    progress(1.0, "done")
    return RunOutput(result=result, stack=stack, grid=grid)
