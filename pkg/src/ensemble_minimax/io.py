"""Artifact files: configs, CSV tables, JSON reports and SVG plots.

Floats are written with ``repr`` (shortest round-trip form), so re-reading a
CSV reproduces the stored values bitwise. Every file is written to a
temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from importlib import resources

import jsonschema
import numpy as np

from .core import Control, TimeGrid
from .errors import ConfigurationError


def _schema(name):
    return json.loads(resources.files(__package__).joinpath("schemas", name).read_text())


CONFIG_SCHEMA = _schema("config.schema.json")
REPORT_SCHEMA = _schema("report.schema.json")


def atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (int, np.integer)) and not isinstance(v, bool) else fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return None if not math.isfinite(obj) else obj
    return obj


def write_json(path, payload, schema=None):
    payload = jsonable(payload)
    if schema is not None:
        jsonschema.validate(payload, schema)
    atomic_write(path, json.dumps(payload, indent=2, allow_nan=False) + "\n")


def load_config(path):
    """Read and validate a run configuration; raises ConfigurationError."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"invalid config: {exc.message}") from None
    if not cfg["alpha_lo"] < cfg["alpha_hi"]:
        raise ConfigurationError("alpha_lo must be smaller than alpha_hi")
    TimeGrid(cfg["T"], cfg["dt"])
    if cfg["initial_guess"] == "analytic" and (cfg["eps1"] is None or cfg["eps2"] is None):
        raise ConfigurationError("initial_guess 'analytic' needs eps1 and eps2")


# ------------------------------------------------------------------ controls


def control_rows(u):
    t = u.grid.left_points
    return [(ti, *vals) for ti, vals in zip(t, u.values)]


def control_header(k):
    return ["t", "u"] if k == 1 else ["t"] + [f"u{i}" for i in range(k)]


def write_control(path, u):
    write_csv(path, control_header(u.k), control_rows(u))


def read_control(path, grid):
    """Load ``control.csv`` onto ``grid``; the time column must match the grid."""
    header, rows = read_csv(path)
    if not header or header[0] != "t" or len(header) < 2:
        raise ConfigurationError(f"{path}: expected columns t,u")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    if data.shape[0] != grid.n_cells or not np.allclose(data[:, 0], grid.left_points, rtol=0, atol=1e-9 * grid.horizon):
        raise ConfigurationError(
            f"{path}: control has {data.shape[0]} cells, grid expects {grid.n_cells} of width {grid.dt}"
        )
    return Control(grid, data[:, 1:])


# --------------------------------------------------------------------- plots


def line_plot_svg(path, x, series, xlabel, ylabel, title=None):
    """Static SVG line plot; ``series`` maps legend labels to y arrays."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in series.items():
        ax.plot(x, y, label=label, lw=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    atomic_write(path, buf.getvalue())
