"""CSV, legacy VTK, gnuplot, config-file and manifest I/O."""
from __future__ import annotations

import configparser
import csv
import json
import platform
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .mesh import ScalarField

TRACE_COLUMNS = ("time", "energy", "sup_norm", "inner_iters", "stop_v", "stop_r")
TABLE_COLUMNS = ("h", "error", "order")


def _fmt(x) -> str:
    return repr(float(x)) if not isinstance(x, (int, np.integer)) else str(int(x))


def write_trace_csv(trace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for k in range(len(trace.times)):
            w.writerow([_fmt(trace.times[k]), _fmt(trace.energies[k]), _fmt(trace.sup_norms[k]),
                        _fmt(trace.inner_iters[k]), _fmt(trace.stop_v[k]), _fmt(trace.stop_r[k])])
    return path


def write_table_csv(report, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for h, e, o in report.rows():
            w.writerow([_fmt(h), _fmt(e), _fmt(o)])
    return path


def read_csv(path) -> Tuple[list, np.ndarray]:
    """Header and float data of a CSV written by this module."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


def write_vtk(field: ScalarField, path, name: str = "u", title: str = "tvflow field") -> Path:
    """Legacy ASCII VTK ``STRUCTURED_GRID`` with point data ``name``.

    Values are printed with 17 significant digits so reading them back
    reproduces the coefficients exactly.
    """
    mesh = field.mesh
    dims = [k + 1 for k in mesh.n_per_axis] + [1] * (3 - mesh.dim)
    pts = np.zeros((mesh.n_vertices, 3))
    pts[:, :mesh.dim] = mesh.vertices
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_GRID",
             "DIMENSIONS {} {} {}".format(*dims), f"POINTS {mesh.n_vertices} double"]
    lines += ["{:.17g} {:.17g} {:.17g}".format(*p) for p in pts]
    lines += [f"POINT_DATA {mesh.n_vertices}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += ["{:.17g}".format(v) for v in field.coeffs]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> Dict[str, np.ndarray]:
    """Parse a file written by :func:`write_vtk`: ``dims``, ``points`` and the scalar array."""
    tokens = Path(path).read_text().split("\n")
    out: Dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("DIMENSIONS"):
            out["dims"] = np.array(line.split()[1:], dtype=int)
        elif line.startswith("POINTS"):
            n = int(line.split()[1])
            out["points"] = np.loadtxt(tokens[i + 1:i + 1 + n], ndmin=2)
            i += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = int(np.prod(out["dims"]))
            out[name] = np.array([float(v) for v in tokens[i + 2:i + 2 + n]])
            i += n + 1
        i += 1
    return out


def write_gnuplot(path, csv_name: str, kind: str = "trace") -> Path:
    """Gnuplot script plotting a CSV that sits in the same directory."""
    if kind == "trace":
        body = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set multiplot layout 3,1",
            "set xlabel 'time'",
            f"plot '{csv_name}' using 1:2 with lines title 'energy'",
            f"plot '{csv_name}' using 1:3 with lines title 'sup norm'",
            f"plot '{csv_name}' using 1:4 with impulses title 'inner iterations'",
            "unset multiplot",
        ]
    elif kind == "table":
        body = [
            "set datafile separator ','",
            "set logscale xy",
            "set xlabel 'h'",
            "set ylabel 'error'",
            f"plot '{csv_name}' using 1:2 with linespoints title 'L^inf(L^2) error', "
            f"'{csv_name}' using 1:(sqrt($1)) with lines dashtype 2 title 'h^(1/2)'",
        ]
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    path = Path(path)
    path.write_text("\n".join(body) + "\npause -1\n")
    return path


def load_config(path) -> Dict[str, str]:
    """Read a ``key = value`` file with ``[sections]``; keys are flattened.

    Keys use the command line spelling (``c-stop-v`` or ``c_stop_v``) and are
    returned with underscores.  Section names only group keys.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str      # keep ``T`` distinct from ``t``
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    out: Dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key.replace("-", "_")] = value
    return out


def environment_versions() -> Dict[str, str]:
    import numba
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "tvflow": __version__}


def write_manifest(path, manifest: dict) -> Path:
    data = dict(manifest)
    data.setdefault("versions", environment_versions())
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)
