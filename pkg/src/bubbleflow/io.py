"""Field files (JSON), diagnostics tables (CSV) and atomic file output.

Floats go through ``json``/``repr``, which emit the shortest decimal that
round-trips, so save followed by load reproduces every sample bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import Dimension, ModalField, ZonalSphereField
from .grid import make_radial_grid, make_sphere_grid

SCHEMA_VERSION = "1.0"
PLANE_MODAL = "plane-modal"
SPHERE_ZONAL = "sphere-zonal"
CSV_COLUMNS = ("s", "J", "I", "delta", "K0", "mass", "rhoH1", "alpha", "lambda", "z", "dt_accepted")


class SchemaError(ValueError):
    pass


def check_schema_version(version, supported: str = SCHEMA_VERSION):
    try:
        major = int(str(version).split(".")[0])
    except ValueError as exc:
        raise SchemaError(f"bad schema_version {version!r}") from exc
    if major > int(supported.split(".")[0]):
        raise SchemaError(f"schema_version {version} is newer than supported {supported}")


def atomic_write(path, data: str | bytes):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def field_to_dict(f) -> dict:
    if isinstance(f, ModalField):
        g = f.grid
        return {
            "schema_version": SCHEMA_VERSION,
            "dim": f.dim.n,
            "axis": list(f.axis),
            "grid": {"map_scale": g.map_scale, "panels": g.panels, "nodes_per_panel": g.nodes_per_panel},
            "representation": PLANE_MODAL,
            "modes": [{"l": l, "values": f.profiles[l].tolist()} for l in range(f.lmax + 1)],
        }
    if isinstance(f, ZonalSphereField):
        return {
            "schema_version": SCHEMA_VERSION,
            "dim": f.dim.n,
            "axis": [0.0] * f.dim.n + [1.0],
            "grid": {"size": f.grid.size},
            "representation": SPHERE_ZONAL,
            "modes": [{"l": 0, "values": f.samples.tolist()}],
        }
    raise TypeError(f"cannot serialize {type(f).__name__}")


def field_from_dict(doc: dict):
    check_schema_version(doc.get("schema_version"))
    dim = Dimension(int(doc["dim"]))
    rep = doc["representation"]
    modes = sorted(doc["modes"], key=lambda m: m["l"])
    if rep == PLANE_MODAL:
        g = doc["grid"]
        grid = make_radial_grid(float(g["map_scale"]), int(g["panels"]), int(g["nodes_per_panel"]))
        lmax = modes[-1]["l"] if modes else 0
        prof = np.zeros((lmax + 1, grid.size))
        for m in modes:
            prof[m["l"]] = np.asarray(m["values"], dtype=float)
        return ModalField(dim, grid, prof, tuple(doc["axis"]))
    if rep == SPHERE_ZONAL:
        grid = make_sphere_grid(dim.n, int(doc["grid"]["size"]))
        return ZonalSphereField(dim, grid, np.asarray(modes[0]["values"], dtype=float))
    raise SchemaError(f"unknown representation {rep!r}")


def save_field(path, f):
    atomic_write(path, json.dumps(field_to_dict(f), indent=1) + "\n")


def load_field(path):
    with open(path, encoding="utf-8") as fh:
        return field_from_dict(json.load(fh))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def diagnostics_csv(records, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_cell(rec.get(c)) for c in columns])
    return buf.getvalue()


def write_diagnostics(path, records, columns=CSV_COLUMNS):
    atomic_write(path, diagnostics_csv(records, columns))


def read_diagnostics(path) -> dict:
    """Columns of a diagnostics CSV as float arrays (empty cells become NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows]) for k in rows[0]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n"


def write_report(path, report: dict):
    atomic_write(path, dumps_report(report))
