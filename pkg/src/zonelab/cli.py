"""Batch front-end: catalog management, template validation, headless runs,
and the HTTP server.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
import time

from .catalog import Catalog
from .errors import SchemaError, ZonelabError
from .raster import resample
from .template import read_template
from .tiff import read_raster, write_raster_atomic
from .workflow import execute_template

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _parse_date(text: str) -> dt.date:
    for fmt in ("%Y-%m-%d", "%d/%m/%Y"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ZonelabError(f"cannot parse date {text!r}: expected YYYY-MM-DD or DD/MM/YYYY")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# -- ingest ---------------------------------------------------------------


def _ingest_rows(args) -> list[tuple[str, str, str, str, str]]:
    if args.manifest:
        rows = []
        with open(args.manifest, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    raise ZonelabError(
                        f"{args.manifest}:{line_no}: expected 5 tab-separated fields "
                        f"(product band date kind path), got {len(parts)}"
                    )
                rows.append(tuple(parts))
        return rows
    needed = [args.product, args.band, args.date, args.kind, args.file]
    if any(v is None for v in needed):
        raise ZonelabError("either --manifest or all of --product/--band/--date/--kind/--file")
    return [tuple(needed)]


def cmd_ingest(args) -> int:
    try:
        catalog = Catalog.open_or_create(args.catalog, args.crs)
        rows = _ingest_rows(args)
    except ZonelabError as exc:
        return _fail(exc.message, EXIT_RUNTIME)

    failures = 0
    for product, band, date_s, kind, path in rows:
        try:
            entry = catalog.ingest(product, band, _parse_date(date_s), kind, path)
            print(f"ingested {entry.product_id}:{entry.band}:{entry.timestamp.isoformat()}")
        except ZonelabError as exc:
            failures += 1
            print(f"error: {exc.message}", file=sys.stderr)
            if not args.keep_going:
                return EXIT_RUNTIME
    return EXIT_RUNTIME if failures else EXIT_OK


# -- validate / run ---------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        read_template(args.template)
    except SchemaError as exc:
        where = f" at {exc.field}" if exc.field else ""
        return _fail(f"template invalid{where}: {exc.message}", EXIT_VALIDATION)
    except ZonelabError as exc:
        return _fail(exc.message, EXIT_VALIDATION)
    except OSError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    print(f"{args.template}: valid")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        template = read_template(args.template)
    except ZonelabError as exc:
        where = f" at {exc.field}" if exc.field else ""
        return _fail(f"template invalid{where}: {exc.message}", EXIT_VALIDATION)
    except OSError as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    try:
        catalog = Catalog.open(args.catalog)
        started = time.perf_counter()
        out = execute_template(template, catalog)
        write_raster_atomic(out.result.band, args.out)
        elapsed = time.perf_counter() - started

        if args.evaluate:
            if out.result.kind != "cluster_map":
                return _fail("--evaluate applies to cluster templates only", EXIT_RUNTIME)
            response = read_raster(args.evaluate, name="response")
            if response.grid != out.result.band.grid:
                response = resample(response, out.result.band.grid)
            from .analysis import evaluate_zones

            report = evaluate_zones(out.result.band, response)
            report_path = args.report or (args.out + ".report.json")
            with open(report_path, "w", encoding="utf-8") as fh:
                json.dump(report.to_dict(), fh, indent=2)
                fh.write("\n")
            print(f"report written to {report_path}")

        cfg = out.result.config
        what = f"k={cfg['k']}" if out.result.kind == "cluster_map" else f"metric={cfg['metric']}"
        print(
            f"{out.result.kind} {what} valid_pixels={out.result.band.valid_count()} "
            f"wall={elapsed:.2f}s -> {args.out}"
        )
        return EXIT_OK
    except ZonelabError as exc:
        return _fail(exc.message, EXIT_RUNTIME)
    except OSError as exc:
        return _fail(str(exc), EXIT_RUNTIME)


# -- serve -------------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    try:
        catalog = Catalog.open(args.catalog)
    except ZonelabError as exc:
        return _fail(exc.message, EXIT_RUNTIME)
    app = create_app(
        catalog,
        workers=args.workers,
        session_ttl=args.session_ttl * 60.0,
        drain_timeout=args.drain_timeout,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except SystemExit as exc:  # uvicorn signals port conflicts this way
        return int(exc.code or EXIT_RUNTIME)
    except OSError as exc:
        return _fail(f"cannot serve on {args.host}:{args.port}: {exc}", EXIT_RUNTIME)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zonelab",
        description="Raster feature exploration: zoning and similarity search over a local catalog.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="register rasters in a catalog")
    p.add_argument("--catalog", required=True, help="catalog root directory")
    p.add_argument("--crs", default=None, help="CRS id when creating a new catalog (e.g. EPSG:32735)")
    p.add_argument("--product", help="product id (may contain '/')")
    p.add_argument("--band", help="band name")
    p.add_argument("--date", help="acquisition date (YYYY-MM-DD or DD/MM/YYYY)")
    p.add_argument("--kind", choices=["continuous", "categorical"], help="sample kind")
    p.add_argument("--file", help="single-band GeoTIFF to ingest")
    p.add_argument("--manifest", help="tab-separated rows: product band date kind path")
    p.add_argument("--keep-going", action="store_true", help="continue past per-row failures")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="validate a template file")
    p.add_argument("--template", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a template end to end")
    p.add_argument("--template", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True, help="output raster path (.tif)")
    p.add_argument("--evaluate", help="response raster; writes a zone evaluation report")
    p.add_argument("--report", help="report path (default: <out>.report.json)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--catalog", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--workers", type=int, default=None, help="job worker threads")
    p.add_argument("--session-ttl", type=float, default=60.0, help="idle session eviction, minutes")
    p.add_argument("--drain-timeout", type=float, default=10.0, help="shutdown drain, seconds")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
