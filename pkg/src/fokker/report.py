"""Report and table emission.

A run writes ``report.json`` (payload plus an isolated ``run`` block with
timestamp and timings), ``payload.json`` (the payload alone, canonical
bytes), CSV tables under ``tables/`` and two-column plot data under
``plot/``. Column layouts are documented in ``schemas/csv_tables.json``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from importlib import resources

import numpy as np

SCHEMA_VERSION = 1
_TYPES = {"int": int, "float": float, "str": str}


def load_schema(name: str) -> dict:
    return json.loads(resources.files("fokker").joinpath("schemas", name).read_text(encoding="utf-8"))


def to_jsonable(obj):
    """Plain JSON types only: complex -> {re, im}, non-finite floats -> strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def inputs_hash(resolved_config: dict) -> str:
    return hashlib.sha256(json.dumps(resolved_config, sort_keys=True).encode()).hexdigest()


def table_columns(table: str, dimension: int | None = None) -> list[str]:
    spec = load_schema("csv_tables.json")["tables"][table]
    cols = [c["name"] for c in spec["columns"]]
    if "repeat" in spec:
        if dimension is None:
            raise ValueError(f"table {table!r} needs the spacetime dimension")
        cols += [spec["repeat"]["name"].format(k=k) for k in range(dimension)]
    return cols


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: str, table: str, rows: list[dict], dimension: int | None = None) -> None:
    cols = table_columns(table, dimension)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])


def read_table(path: str, table: str) -> list[dict]:
    """Parse a CSV table, checking its header and column types against the schema."""
    spec = load_schema("csv_tables.json")["tables"][table]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        fixed = [c["name"] for c in spec["columns"]]
        types = {c["name"]: _TYPES[c["type"]] for c in spec["columns"]}
        if header[:len(fixed)] != fixed:
            raise ValueError(f"{path}: header {header} does not start with {fixed}")
        extra = header[len(fixed):]
        if "repeat" in spec:
            expect = [spec["repeat"]["name"].format(k=k) for k in range(len(extra))]
            if extra != expect:
                raise ValueError(f"{path}: repeated columns {extra} do not match {expect}")
            for name in extra:
                types[name] = _TYPES[spec["repeat"]["type"]]
        elif extra:
            raise ValueError(f"{path}: unexpected columns {extra}")
        return [{k: types[k](v) for k, v in zip(header, row)} for row in reader]


def trajectory_rows(lines) -> list[dict]:
    rows = []
    for particle, line in enumerate(lines, start=1):
        for n, v in enumerate(line.vertices):
            row = {"particle": particle, "vertex": n}
            row.update({f"x{k}": float(x) for k, x in enumerate(v)})
            rows.append(row)
    return rows


def read_trajectory(path: str) -> dict[int, np.ndarray]:
    rows = read_table(path, "trajectory")
    out: dict[int, list] = {}
    for r in rows:
        comps = sorted((k for k in r if k.startswith("x")), key=lambda s: int(s[1:]))
        out.setdefault(r["particle"], []).append((r["vertex"], [r[c] for c in comps]))
    return {p: np.array([v for _, v in sorted(vs)]) for p, vs in out.items()}


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, load_schema("report.schema.json"))


def emit_report(outdir: str, experiment: str, resolved: dict, results: dict, tables: dict,
                plots: dict, timings: dict, versions: dict, status: str = "ok",
                formats=("json", "csv"), dimension: int | None = None) -> dict:
    """Write every output file; returns the report object.

    ``tables`` maps table file stem -> (schema table name, rows); ``plots``
    maps file stem -> list of (abscissa, ordinate).
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "csv" in formats:
        os.makedirs(os.path.join(outdir, "tables"), exist_ok=True)
        for stem, (table, rows) in sorted(tables.items()):
            write_table(os.path.join(outdir, "tables", f"{stem}.csv"), table, rows, dimension)
            written.append(f"tables/{stem}.csv")
        if plots:
            os.makedirs(os.path.join(outdir, "plot"), exist_ok=True)
        for stem, pts in sorted(plots.items()):
            rows = [{"abscissa": float(x), "ordinate": float(y)} for x, y in pts]
            write_table(os.path.join(outdir, "plot", f"{stem}.csv"), "plot", rows)
            written.append(f"plot/{stem}.csv")
    payload = {
        "experiment": experiment,
        "status": status,
        "config": resolved,
        "inputs_hash": inputs_hash(resolved),
        "versions": versions,
        "results": to_jsonable(results),
        "tables": written,
    }
    report = {
        "schema_version": SCHEMA_VERSION,
        "payload": payload,
        "run": {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "timings": {k: round(float(v), 6) for k, v in sorted(timings.items())},
        },
    }
    validate_report(report)
    if "json" in formats:
        with open(os.path.join(outdir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(report))
        with open(os.path.join(outdir, "payload.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload))
    return report


def error_record(exit_code: int, exc: BaseException, experiment: str | None) -> dict:
    return {
        "status": "error",
        "exit_code": exit_code,
        "error_type": type(exc).__name__,
        "key": getattr(exc, "key", None),
        "message": str(exc),
        "experiment": experiment,
    }
