"""HTTP API: sessions, catalog browsing, alias/feature management,
analysis jobs, rendering, and downloads.

Sessions are in-memory working copies of a template, evicted after an
idle TTL; the only persistence is template export. Jobs run on a bounded
thread pool against an immutable snapshot of the session state taken at
submission, so concurrent edits never bleed into a running job.

All failures are structured ``{code, message, field?}`` bodies: DSL and
schema problems are 422 (with parser offsets), unmet preconditions 409,
unknown ids 404. Compute failures surface as failed jobs, never as 5xx
on submission.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .aliases import evaluate_alias, parse_alias
from .analysis import ClusterConfig, SimilarityConfig, ZoneEvalReport, evaluate_zones
from .errors import AnalysisError
from .catalog import Catalog
from .errors import (
    DslError,
    DuplicateEntryError,
    PreconditionError,
    SchemaError,
    ZonelabError,
)
from .features import evaluate_feature, feature_name, parse_feature
from .geometry import geometry_from_geojson
from .raster import Band, Grid, band_statistics, resample
from .render import render_png
from .template import Template, state_hash, template_from_dict
from .tiff import raster_bytes
from .workflow import Cancelled, RunOutput, execute_template, target_grid

JOB_QUEUED = "queued"
JOB_RUNNING = "running"
JOB_DONE = "done"
JOB_FAILED = "failed"


def _status_for(exc: ZonelabError) -> int:
    if isinstance(exc, (DslError, SchemaError)):
        return 422
    if isinstance(exc, (PreconditionError, DuplicateEntryError)):
        return 409
    return 400


class HttpError(ZonelabError):
    """Error with an explicit HTTP status (404s mostly)."""

    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message, field=field)
        self.code = code
        self.status = status


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


class Session:
    def __init__(self, session_id: str, crs_id: str):
        self.id = session_id
        self.created_at = dt.datetime.now(dt.timezone.utc)
        self.last_access = time.monotonic()
        self.lock = threading.Lock()
        self.layer_cache: dict = {}
        self.name = "session"
        self.crs_id = crs_id
        self.target_resolution: float | None = None
        self.regions: dict = {}
        self.aliases: list[str] = []
        self.features: list[str] = []
        self.operation: dict | None = None
        self.landcover: dict | None = None
        self.output: dict = {}

    def touch(self):
        self.last_access = time.monotonic()

    def draft_document(self) -> dict:
        doc = {
            "version": 1,
            "name": self.name,
            "crs_id": self.crs_id,
            "target_resolution": self.target_resolution,
            "regions": dict(self.regions),
            "aliases": list(self.aliases),
            "features": list(self.features),
            "operation": dict(self.operation) if self.operation else None,
        }
        if self.landcover:
            doc["landcover"] = dict(self.landcover)
        if self.output:
            doc["output"] = dict(self.output)
        return doc

    def missing_fields(self) -> list[str]:
        missing = []
        if self.target_resolution is None:
            missing.append("target_resolution")
        if "query" not in self.regions:
            missing.append("regions.query")
        if not self.operation:
            missing.append("operation")
        return missing

    def template(self, operation_override: dict | None = None) -> Template:
        """Strictly validated template from the current state."""
        missing = self.missing_fields()
        if operation_override and "operation" in missing:
            missing.remove("operation")
        if missing:
            raise PreconditionError(
                "session is not a complete template; missing: " + ", ".join(missing)
            )
        doc = self.draft_document()
        if operation_override:
            doc["operation"] = operation_override
        return template_from_dict(doc)

    def replace_from_document(self, doc: dict):
        template_from_dict(doc)  # full validation before any mutation
        self.name = doc["name"]
        self.crs_id = doc["crs_id"]
        self.target_resolution = doc["target_resolution"]
        self.regions = dict(doc["regions"])
        self.aliases = list(doc["aliases"])
        self.features = list(doc["features"])
        self.operation = dict(doc["operation"])
        self.landcover = dict(doc["landcover"]) if doc.get("landcover") else None
        self.output = dict(doc.get("output", {}))
        self.layer_cache.clear()

    def current_hash(self) -> str:
        missing = self.missing_fields()
        if not missing:
            return state_hash(self.template().to_dict())
        return state_hash(self.draft_document())

    def summary(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at.isoformat(),
            "name": self.name,
            "crs_id": self.crs_id,
            "target_resolution": self.target_resolution,
            "regions": sorted(self.regions),
            "aliases": list(self.aliases),
            "features": list(self.features),
            "operation": self.operation,
            "landcover": self.landcover,
            "complete": not self.missing_fields(),
            "state_hash": self.current_hash(),
        }


class SessionStore:
    def __init__(self, crs_id: str, ttl_seconds: float):
        self.crs_id = crs_id
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self) -> Session:
        session = Session(uuid.uuid4().hex, self.crs_id)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        self.sweep()
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HttpError(404, "unknown_session", f"no session {session_id!r}")
        session.touch()
        return session

    def sweep(self):
        now = time.monotonic()
        with self._lock:
            dead = [sid for sid, s in self._sessions.items() if now - s.last_access > self.ttl]
            for sid in dead:
                del self._sessions[sid]


# ---------------------------------------------------------------------------
# Jobs
# ---------------------------------------------------------------------------


@dataclass
class Job:
    id: str
    session_id: str
    kind: str
    status: str = JOB_QUEUED
    progress: float = 0.0
    error: dict | None = None
    output: RunOutput | None = None
    report: ZoneEvalReport | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def set_progress(self, fraction: float):
        with self.lock:
            self.progress = max(self.progress, min(1.0, fraction))

    def to_dict(self) -> dict:
        with self.lock:
            doc = {
                "id": self.id,
                "session_id": self.session_id,
                "kind": self.kind,
                "status": self.status,
                "progress": self.progress,
            }
            if self.error is not None:
                doc["error"] = dict(self.error)
            if self.status == JOB_DONE and self.output is not None:
                doc["result"] = self.output.result.metadata()
            return doc


class JobManager:
    def __init__(self, workers: int):
        self.executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="job")
        self.jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._active = 0
        self._idle = threading.Condition(self._lock)

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise HttpError(404, "unknown_job", f"no job {job_id!r}")
        return job

    def submit(self, session_id: str, kind: str, work) -> Job:
        """``work(job)`` runs on the pool; submission never blocks."""
        job = Job(id=uuid.uuid4().hex, session_id=session_id, kind=kind)
        with self._lock:
            self.jobs[job.id] = job
            self._active += 1
        self.executor.submit(self._run, job, work)
        return job

    def _run(self, job: Job, work):
        try:
            with job.lock:
                if job.status != JOB_QUEUED:  # cancelled while queued
                    return
                job.status = JOB_RUNNING
            try:
                work(job)
            except Cancelled:
                self._fail(job, {"code": "cancelled", "message": "job cancelled"})
                return
            except ZonelabError as exc:
                self._fail(job, exc.to_dict())
                return
            except Exception as exc:  # noqa: BLE001 - job isolation boundary
                self._fail(job, {"code": "internal", "message": f"{type(exc).__name__}: {exc}"})
                return
            with job.lock:
                job.status = JOB_DONE
                job.progress = 1.0
        finally:
            with self._idle:
                self._active -= 1
                self._idle.notify_all()

    def _fail(self, job: Job, error: dict):
        with job.lock:
            job.status = JOB_FAILED
            job.error = error

    def cancel(self, job_id: str) -> Job:
        job = self.get(job_id)
        with job.lock:
            if job.status == JOB_QUEUED:
                job.status = JOB_FAILED
                job.error = {"code": "cancelled", "message": "job cancelled"}
            elif job.status == JOB_RUNNING:
                job.cancel_event.set()
        return job

    def drain(self, timeout: float):
        """Wait for running jobs; cancel whatever is still going afterwards."""
        deadline = time.monotonic() + timeout
        with self._idle:
            while self._active > 0 and time.monotonic() < deadline:
                self._idle.wait(timeout=min(0.1, max(0.0, deadline - time.monotonic())))
        for job in list(self.jobs.values()):
            with job.lock:
                if job.status in (JOB_QUEUED, JOB_RUNNING):
                    job.cancel_event.set()
        self.executor.shutdown(wait=True, cancel_futures=True)


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _layer_cache_key(catalog_version: int):
    def key(text: str, grid: Grid) -> str:
        material = f"{text}|{catalog_version}|{grid}"
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    return key


def create_app(
    catalog: Catalog,
    workers: int | None = None,
    session_ttl: float = 3600.0,
    drain_timeout: float = 10.0,
) -> FastAPI:
    import os
    from contextlib import asynccontextmanager

    workers = workers or os.cpu_count() or 2
    sessions = SessionStore(catalog.crs_id, session_ttl)
    jobs = JobManager(workers)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        jobs.drain(drain_timeout)

    app = FastAPI(title="zonelab", version="0.1.0", lifespan=lifespan)
    app.state.catalog = catalog
    app.state.sessions = sessions
    app.state.jobs = jobs

    # -- error shaping -------------------------------------------------------

    @app.exception_handler(HttpError)
    async def _http_error(request: Request, exc: HttpError):
        return JSONResponse(status_code=exc.status, content=exc.to_dict())

    @app.exception_handler(ZonelabError)
    async def _domain_error(request: Request, exc: ZonelabError):
        return JSONResponse(status_code=_status_for(exc), content=exc.to_dict())

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", []))
        return JSONResponse(
            status_code=422,
            content={"code": "schema_error", "message": first.get("msg", "invalid request"), "field": loc},
        )

    @app.exception_handler(Exception)
    async def _unexpected(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"code": "internal", "message": f"{type(exc).__name__}: {exc}"},
        )

    # -- catalog -------------------------------------------------------------

    @app.get("/api/catalog/products")
    def list_products():
        return [p.to_dict() for p in catalog.list_products()]

    # -- sessions ------------------------------------------------------------

    @app.post("/api/sessions", status_code=201)
    def create_session():
        session = sessions.create()
        return {"id": session.id}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return sessions.get(session_id).summary()

    @app.get("/api/sessions/{session_id}/template")
    def export_template(session_id: str):
        session = sessions.get(session_id)
        with session.lock:
            return session.template().to_dict()

    @app.put("/api/sessions/{session_id}/template")
    def import_template(session_id: str, doc: dict):
        session = sessions.get(session_id)
        with session.lock:
            session.replace_from_document(doc)
            return session.summary()

    @app.put("/api/sessions/{session_id}/settings")
    def update_settings(session_id: str, body: dict):
        session = sessions.get(session_id)
        allowed = {"name", "target_resolution", "landcover", "output", "operation"}
        unknown = set(body) - allowed
        if unknown:
            raise SchemaError(f"unknown settings fields: {sorted(unknown)}", field="$")
        with session.lock:
            if "name" in body:
                if not isinstance(body["name"], str) or not body["name"]:
                    raise SchemaError("name must be a non-empty string", field="$.name")
                session.name = body["name"]
            if "target_resolution" in body:
                value = body["target_resolution"]
                if not isinstance(value, (int, float)) or value <= 0:
                    raise SchemaError("target_resolution must be > 0", field="$.target_resolution")
                session.target_resolution = float(value)
                session.layer_cache.clear()
            if "landcover" in body:
                session.landcover = body["landcover"]
            if "output" in body:
                session.output = dict(body["output"] or {})
            if "operation" in body:
                op = body["operation"]
                if not (
                    isinstance(op, dict)
                    and len(op) == 1
                    and next(iter(op)) in ("cluster", "similarity")
                ):
                    raise SchemaError(
                        "operation must be {\"cluster\": {...}} or {\"similarity\": {...}}",
                        field="$.operation",
                    )
                kind, cfg = next(iter(op.items()))
                try:
                    ClusterConfig(**cfg) if kind == "cluster" else SimilarityConfig(**cfg)
                except (TypeError, AnalysisError) as exc:
                    raise SchemaError(f"invalid {kind} config: {exc}", field="$.operation")
                session.operation = dict(op)
            return session.summary()

    @app.put("/api/sessions/{session_id}/regions/{role}")
    def put_region(session_id: str, role: str, geojson: dict):
        if role not in ("query", "reference"):
            raise HttpError(404, "unknown_region", f"region role must be query or reference, got {role!r}")
        session = sessions.get(session_id)
        region = geometry_from_geojson(geojson, role)
        with session.lock:
            session.regions[role] = region.to_geojson()
            return session.summary()

    @app.delete("/api/sessions/{session_id}/regions/{role}")
    def delete_region(session_id: str, role: str):
        session = sessions.get(session_id)
        with session.lock:
            if role not in session.regions:
                raise HttpError(404, "unknown_region", f"session has no {role!r} region")
            del session.regions[role]
            return session.summary()

    # -- aliases and features --------------------------------------------------

    @app.post("/api/sessions/{session_id}/aliases", status_code=201)
    def add_alias(session_id: str, body: dict):
        session = sessions.get(session_id)
        text = body.get("text")
        if not isinstance(text, str):
            raise SchemaError("body must be {\"text\": \"<alias string>\"}", field="$.text")
        spec = parse_alias(text)
        with session.lock:
            existing = {parse_alias(a).name for a in session.aliases}
            if spec.name in existing:
                raise DslError(f"alias name {spec.name!r} already defined", offset=0)
            if spec.name in {feature_name(f) for f in session.features}:
                raise DslError(f"alias name {spec.name!r} collides with a feature", offset=0)
            session.aliases.append(text)
        # Statistics are evaluated lazily: fetch the layer stats endpoint once
        # a grid is configured (first visualization).
        return {
            "alias": {
                "name": spec.name,
                "product_id": spec.product_id,
                "band": spec.band,
                "start": spec.start.isoformat(),
                "end": spec.end.isoformat(),
                "agg": spec.agg,
            },
            "canonical": spec.canonical(),
        }

    @app.delete("/api/sessions/{session_id}/aliases/{name}")
    def delete_alias(session_id: str, name: str):
        session = sessions.get(session_id)
        with session.lock:
            for i, text in enumerate(session.aliases):
                if parse_alias(text).name == name:
                    del session.aliases[i]
                    return session.summary()
        raise HttpError(404, "unknown_alias", f"session has no alias {name!r}")

    @app.post("/api/sessions/{session_id}/features", status_code=201)
    def add_feature(session_id: str, body: dict):
        session = sessions.get(session_id)
        text = body.get("text")
        if not isinstance(text, str):
            raise SchemaError("body must be {\"text\": \"<feature string>\"}", field="$.text")
        with session.lock:
            known = [parse_alias(a).name for a in session.aliases]
            spec = parse_feature(text, known)
            if any(feature_name(f) == spec.name for f in session.features):
                raise DslError(f"feature name {spec.name!r} already defined", offset=0)
            session.features.append(text)
        return {"feature": {"name": spec.name}, "canonical": spec.canonical()}

    @app.delete("/api/sessions/{session_id}/features/{name}")
    def delete_feature(session_id: str, name: str):
        session = sessions.get(session_id)
        with session.lock:
            for i, text in enumerate(session.features):
                if feature_name(text) == name:
                    del session.features[i]
                    return session.summary()
        raise HttpError(404, "unknown_feature", f"session has no feature {name!r}")

    # -- layers: stats and rendering ------------------------------------------

    def _session_grid(session: Session) -> Grid:
        if session.target_resolution is None or "query" not in session.regions:
            raise PreconditionError(
                "layer evaluation needs a query region and a target_resolution"
            )
        doc = session.regions["query"]
        query = geometry_from_geojson(doc, "query")
        bounds = list(query.bounds())
        if "reference" in session.regions:
            ref = geometry_from_geojson(session.regions["reference"], "reference")
            rb = ref.bounds()
            bounds = [
                min(bounds[0], rb[0]),
                min(bounds[1], rb[1]),
                max(bounds[2], rb[2]),
                max(bounds[3], rb[3]),
            ]
        return Grid.cover(session.crs_id, tuple(bounds), session.target_resolution)

    def _evaluate_layer(session: Session, name: str) -> Band:
        """Alias or feature band on the session grid, via the layer cache."""
        grid = _session_grid(session)
        key_fn = _layer_cache_key(catalog.version)
        with session.lock:
            alias_specs = {parse_alias(t).name: (t, parse_alias(t)) for t in session.aliases}
            known = list(alias_specs)
            # a feature left dangling by an alias delete only fails when it is
            # the one being requested
            feature_texts = {feature_name(t): t for t in session.features}
        feature_specs = {}
        if name in feature_texts:
            spec = parse_feature(feature_texts[name], known)
            feature_specs[spec.name] = (feature_texts[name], spec)

        if name in alias_specs:
            text, spec = alias_specs[name]
            key = key_fn(text, grid)
            if key not in session.layer_cache:
                session.layer_cache[key] = evaluate_alias(spec, catalog, grid).band
            return session.layer_cache[key]
        if name in feature_specs:
            text, spec = feature_specs[name]
            key = key_fn(text, grid)
            if key not in session.layer_cache:
                layers = {}
                for alias_name, (alias_text, alias_spec) in alias_specs.items():
                    akey = key_fn(alias_text, grid)
                    if akey not in session.layer_cache:
                        session.layer_cache[akey] = evaluate_alias(alias_spec, catalog, grid).band
                    layers[alias_name] = session.layer_cache[akey]
                session.layer_cache[key] = evaluate_feature(spec, layers, grid)
            return session.layer_cache[key]
        raise HttpError(404, "unknown_layer", f"session has no layer {name!r}")

    def _resolve_layer(session: Session, name: str) -> Band:
        try:
            return _evaluate_layer(session, name)
        except HttpError:
            job = jobs.jobs.get(name)
            if job is not None and job.session_id == session.id:
                if job.status != JOB_DONE or job.output is None:
                    raise PreconditionError(f"job {name} has no result (status {job.status})")
                return job.output.result.band
            raise

    @app.get("/api/sessions/{session_id}/layers/{name}/stats")
    def layer_stats(session_id: str, name: str):
        session = sessions.get(session_id)
        band = _resolve_layer(session, name)
        return band_statistics(band).to_dict()

    @app.get("/api/sessions/{session_id}/render/{name}")
    def render_layer(
        session_id: str,
        name: str,
        bbox: str | None = Query(default=None),
        width: int | None = Query(default=None, ge=1, le=4096),
        height: int | None = Query(default=None, ge=1, le=4096),
        min: float | None = Query(default=None),  # noqa: A002 - API field name
        max: float | None = Query(default=None),  # noqa: A002
    ):
        session = sessions.get(session_id)
        band = _resolve_layer(session, name)
        grid = band.grid
        if bbox is not None:
            try:
                x0, y0, x1, y1 = (float(p) for p in bbox.split(","))
            except ValueError:
                raise SchemaError("bbox must be 'minx,miny,maxx,maxy'", field="bbox")
            if not (x1 > x0 and y1 > y0):
                raise SchemaError("bbox must have positive extent", field="bbox")
        else:
            x0, y0, x1, y1 = grid.bounds()
        out_w = width or grid.width
        out_h = height or grid.height
        window = Grid(
            grid.crs_id, x0, y1, (x1 - x0) / out_w, (y1 - y0) / out_h, out_w, out_h
        )
        png = render_png(resample(band, window), vmin=min, vmax=max)
        return Response(content=png, media_type="image/png")

    # -- jobs ------------------------------------------------------------------

    def _submit_template_run(session: Session, operation_override: dict | None) -> Job:
        template = session.template(operation_override)
        kind = template.operation_kind
        cache = session.layer_cache
        key_fn = _layer_cache_key(catalog.version)

        def work(job: Job):
            out = execute_template(
                template,
                catalog,
                progress=lambda f, m: job.set_progress(f),
                cancel_check=job.cancel_event.is_set,
                layer_cache=cache,
                cache_key=key_fn,
            )
            job.output = out

        return jobs.submit(session.id, kind, work)

    def _submit_evaluation(session: Session, spec: dict) -> Job:
        cluster_job_id = spec.get("cluster_job")
        response_alias = spec.get("response_alias")
        if not cluster_job_id or not response_alias:
            raise SchemaError(
                "evaluate needs {\"cluster_job\": <job id>, \"response_alias\": <alias name>}",
                field="$.evaluate",
            )
        source = jobs.get(str(cluster_job_id))
        if source.session_id != session.id:
            raise HttpError(404, "unknown_job", f"no job {cluster_job_id!r} in this session")
        if source.status != JOB_DONE or source.output is None:
            raise PreconditionError(f"cluster job {cluster_job_id} is {source.status}, not done")
        if source.output.result.kind != "cluster_map":
            raise PreconditionError("evaluation needs a cluster job as its source")
        cluster_band = source.output.result.band

        with session.lock:
            alias_map = {parse_alias(t).name: parse_alias(t) for t in session.aliases}
        if response_alias not in alias_map:
            raise HttpError(404, "unknown_alias", f"session has no alias {response_alias!r}")
        spec_alias = alias_map[response_alias]

        def work(job: Job):
            job.set_progress(0.2)
            response = evaluate_alias(spec_alias, catalog, cluster_band.grid).band
            job.set_progress(0.6)
            job.report = evaluate_zones(cluster_band, response)
            job.output = source.output

        return jobs.submit(session.id, "evaluate", work)

    @app.post("/api/sessions/{session_id}/run", status_code=202)
    def run_operation(session_id: str, body: dict | None = None):
        session = sessions.get(session_id)
        body = body or {}
        if "evaluate" in body:
            job = _submit_evaluation(session, body["evaluate"])
        else:
            override = body.get("operation")
            try:
                job = _submit_template_run(session, override)
            except SchemaError as exc:
                # Session state does not assemble into a runnable template.
                raise PreconditionError(exc.message, field=exc.field)
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        return jobs.get(job_id).to_dict()

    @app.post("/api/jobs/{job_id}/cancel")
    def job_cancel(job_id: str):
        return jobs.cancel(job_id).to_dict()

    @app.get("/api/jobs/{job_id}/result.tif")
    def job_result(job_id: str):
        job = jobs.get(job_id)
        if job.status != JOB_DONE or job.output is None:
            raise PreconditionError(f"job {job_id} has no result (status {job.status})")
        return Response(content=raster_bytes(job.output.result.band), media_type="image/tiff")

    @app.get("/api/jobs/{job_id}/report")
    def job_report(job_id: str):
        job = jobs.get(job_id)
        if job.status != JOB_DONE:
            raise PreconditionError(f"job {job_id} is {job.status}, not done")
        if job.report is None:
            raise PreconditionError(f"job {job_id} is a {job.kind} job with no evaluation report")
        return job.report.to_dict()

    return app
