"""zonelab: raster feature exploration over a local catalog.

Workflow: register rasters in a catalog, define temporally aggregated
alias layers and arithmetic feature expressions, stack the features onto
one grid, then either segment a region into k-means zones or rank every
pixel by distance to a reference region's feature vector. Results export
as single-band GeoTIFFs; whole workflows serialize as template files.
"""

from .aliases import AliasLayer, AliasSpec, evaluate_alias, parse_alias, parse_alias_corpus
from .analysis import (
    AnalysisResult,
    ClusterConfig,
    SimilarityConfig,
    StandardizationParams,
    ZoneEvalReport,
    ZoneStats,
    evaluate_zones,
    metric_distances,
    run_clustering,
    run_similarity,
    standardize_stack,
    welch_p_value,
)
from .catalog import Catalog, CatalogEntry, ProductInfo
from .errors import ZonelabError
from .features import FeatureSpec, build_feature_stack, evaluate_feature, parse_feature, print_expr
from .geometry import RegionGeometry, contains_points, rasterize, read_geometry
from .raster import (
    Band,
    BandStats,
    CATEGORICAL,
    CONTINUOUS,
    FeatureStack,
    Grid,
    apply_mask,
    band_statistics,
    resample,
)
from .render import render_png
from .template import LandcoverFilter, Template, read_template, state_hash, write_template
from .tiff import read_raster, write_raster, write_raster_atomic
from .workflow import RunOutput, execute_template, target_grid

__version__ = "0.1.0"

__all__ = [
    "AliasLayer",
    "AliasSpec",
    "AnalysisResult",
    "Band",
    "BandStats",
    "CATEGORICAL",
    "CONTINUOUS",
    "Catalog",
    "CatalogEntry",
    "ClusterConfig",
    "FeatureSpec",
    "FeatureStack",
    "Grid",
    "LandcoverFilter",
    "ProductInfo",
    "RegionGeometry",
    "RunOutput",
    "SimilarityConfig",
    "StandardizationParams",
    "Template",
    "ZoneEvalReport",
    "ZoneStats",
    "ZonelabError",
    "apply_mask",
    "band_statistics",
    "build_feature_stack",
    "contains_points",
    "evaluate_alias",
    "evaluate_feature",
    "evaluate_zones",
    "execute_template",
    "metric_distances",
    "parse_alias",
    "parse_alias_corpus",
    "parse_feature",
    "print_expr",
    "rasterize",
    "read_geometry",
    "read_raster",
    "read_template",
    "render_png",
    "resample",
    "run_clustering",
    "run_similarity",
    "standardize_stack",
    "state_hash",
    "target_grid",
    "welch_p_value",
    "write_raster",
    "write_raster_atomic",
    "write_template",
]
