"""Exception hierarchy shared across the package.

Every error that can surface through the HTTP API or the CLI carries a
short machine-readable ``code`` plus an optional ``field`` (a dotted path
into the offending document, or a byte offset for DSL strings).
"""

from __future__ import annotations


class ZonelabError(Exception):
    """Base class; ``code`` is stable, ``message`` is for humans."""

    code = "error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def to_dict(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return body


class CrsMismatchError(ZonelabError):
    code = "crs_mismatch"


class GridMismatchError(ZonelabError):
    code = "grid_mismatch"


class GeometryError(ZonelabError):
    code = "bad_geometry"


class EmptyDomainError(ZonelabError):
    code = "empty_domain"


class DslError(ZonelabError):
    """Parse failure in an alias or feature string; ``offset`` is 0-based."""

    code = "dsl_error"

    def __init__(self, message: str, offset: int | None = None):
        field = None if offset is None else f"offset:{offset}"
        super().__init__(message, field=field)
        self.offset = offset


class UnknownAliasError(DslError):
    code = "unknown_alias"


class CatalogError(ZonelabError):
    code = "catalog_error"


class DuplicateEntryError(CatalogError):
    code = "duplicate_entry"


class UnknownLayerError(CatalogError):
    code = "unknown_layer"


class RasterFormatError(ZonelabError):
    code = "bad_raster"


class SchemaError(ZonelabError):
    """Template/document validation failure; ``field`` is a JSON path."""

    code = "schema_error"


class PreconditionError(ZonelabError):
    """Operation prerequisites not met (e.g. similarity without reference)."""

    code = "precondition_failed"


class AnalysisError(ZonelabError):
    code = "analysis_error"
