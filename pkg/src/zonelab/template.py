"""Template files: the full serialized workflow configuration.

A template is a single JSON document (schema in ``schemas/`` and shipped
under ``docs/``) carrying the spatial domain, alias and feature strings,
optional land-cover filter, and the operation to run. Validation is
two-stage: structural (JSON Schema, unknown fields rejected) then semantic
(every DSL string re-parses, similarity requires a reference region).
The same validator backs file IO and the HTTP API, so a file that loads
here is exactly a document the service accepts.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import importlib.resources
import json
import os
import tempfile
from dataclasses import dataclass, field

import jsonschema

from .aliases import parse_alias
from .analysis import ClusterConfig, SimilarityConfig
from .errors import DslError, GeometryError, SchemaError
from .features import parse_feature
from .geometry import QUERY, REFERENCE, RegionGeometry, geometry_from_geojson

TEMPLATE_VERSION = 1


def _load_schema() -> dict:
    ref = importlib.resources.files("zonelab").joinpath("schemas/template.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))

TEMPLATE_SCHEMA = _load_schema()
_VALIDATOR = jsonschema.Draft202012Validator(TEMPLATE_SCHEMA)


@dataclass(frozen=True)
class LandcoverFilter:
    product: str
    band: str
    start: dt.date
    end: dt.date
    classes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "product": self.product,
            "band": self.band,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "classes": list(self.classes),
        }


@dataclass(frozen=True)
class Template:
    name: str
    crs_id: str
    target_resolution: float
    query: RegionGeometry
    aliases: tuple[str, ...]
    features: tuple[str, ...]
    operation: ClusterConfig | SimilarityConfig
    reference: RegionGeometry | None = None
    landcover: LandcoverFilter | None = None
    output: dict = field(default_factory=dict)
    version: int = TEMPLATE_VERSION

    @property
    def operation_kind(self) -> str:
        return "cluster" if isinstance(self.operation, ClusterConfig) else "similarity"

    def to_dict(self) -> dict:
        regions = {"query": self.query.to_geojson()}
        if self.reference is not None:
            regions["reference"] = self.reference.to_geojson()
        doc = {
            "version": self.version,
            "name": self.name,
            "crs_id": self.crs_id,
            "target_resolution": self.target_resolution,
            "regions": regions,
            "aliases": list(self.aliases),
            "features": list(self.features),
            "operation": {self.operation_kind: self.operation.to_dict()},
        }
        if self.landcover is not None:
            doc["landcover"] = self.landcover.to_dict()
        if self.output:
            doc["output"] = dict(self.output)
        return doc


def _parse_iso_or_dsl_date(text: str, path: str) -> dt.date:
    for parser in (dt.date.fromisoformat,):
        try:
            return parser(text)
        except ValueError:
            pass
    try:
        return dt.datetime.strptime(text, "%d/%m/%Y").date()
    except ValueError:
        raise SchemaError(f"cannot parse date {text!r}", field=path)


def validate_document(doc) -> None:
    """Structural + semantic validation; raises SchemaError with the path
    of the first offending field."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        raise SchemaError(err.message, field=path)

    def dsl_detail(exc: DslError) -> str:
        if exc.offset is None:
            return exc.message
        return f"{exc.message} (at offset {exc.offset})"

    alias_names = []
    for i, text in enumerate(doc["aliases"]):
        try:
            alias_names.append(parse_alias(text).name)
        except DslError as exc:
            raise SchemaError(f"alias does not parse: {dsl_detail(exc)}", field=f"$.aliases[{i}]")
    if len(set(alias_names)) != len(alias_names):
        raise SchemaError("duplicate alias names", field="$.aliases")

    feature_names = []
    for i, text in enumerate(doc["features"]):
        try:
            spec = parse_feature(text, alias_names)
        except DslError as exc:
            raise SchemaError(
                f"feature does not parse: {dsl_detail(exc)}", field=f"$.features[{i}]"
            )
        if spec.name in feature_names:
            raise SchemaError(f"duplicate feature name {spec.name!r}", field=f"$.features[{i}]")
        feature_names.append(spec.name)

    for role in ("query", "reference"):
        geo = doc["regions"].get(role)
        if geo is not None:
            try:
                geometry_from_geojson(geo, role)
            except GeometryError as exc:
                raise SchemaError(exc.message, field=f"$.regions.{role}")

    if "similarity" in doc["operation"] and "reference" not in doc["regions"]:
        raise SchemaError(
            "similarity operation requires a reference region", field="$.regions.reference"
        )

    lc = doc.get("landcover")
    if lc is not None:
        start = _parse_iso_or_dsl_date(lc["start"], "$.landcover.start")
        end = _parse_iso_or_dsl_date(lc["end"], "$.landcover.end")
        if start > end:
            raise SchemaError("landcover start is after end", field="$.landcover.start")


def template_from_dict(doc) -> Template:
    """Validate a document and build the typed template."""
    validate_document(doc)
    op_kind, op_doc = next(iter(doc["operation"].items()))
    operation = ClusterConfig(**op_doc) if op_kind == "cluster" else SimilarityConfig(**op_doc)
    lc = doc.get("landcover")
    landcover = None
    if lc is not None:
        landcover = LandcoverFilter(
            product=lc["product"],
            band=lc["band"],
            start=_parse_iso_or_dsl_date(lc["start"], "$.landcover.start"),
            end=_parse_iso_or_dsl_date(lc["end"], "$.landcover.end"),
            classes=tuple(lc["classes"]),
        )
    reference = None
    if "reference" in doc["regions"]:
        reference = geometry_from_geojson(doc["regions"]["reference"], REFERENCE)
    return Template(
        name=doc["name"],
        crs_id=doc["crs_id"],
        target_resolution=float(doc["target_resolution"]),
        query=geometry_from_geojson(doc["regions"]["query"], QUERY),
        reference=reference,
        landcover=landcover,
        aliases=tuple(doc["aliases"]),
        features=tuple(doc["features"]),
        operation=operation,
        output=dict(doc.get("output", {})),
    )


def template_to_json(template: Template) -> str:
    """Canonical serialized form: fixed field order, two-space indent."""
    return json.dumps(template.to_dict(), indent=2, ensure_ascii=False) + "\n"


def state_hash(doc) -> str:
    """Content hash of a template document (key order independent)."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_template(source) -> Template:
    """Read and validate a template from a path, JSON text, or dict."""
    if isinstance(source, dict):
        return template_from_dict(source)
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"template is not valid JSON: {exc}", field="$")
    return template_from_dict(doc)


def write_template(template: Template, path: str) -> None:
    validate_document(template.to_dict())
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(template_to_json(template))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
