"""File formats: run configs, design CSVs, interval documents, provenance.

Run config (TOML)::

    response = "y"              # response column of the design CSV
    columns = ["one", "x1"]     # design columns; default: all but response
    a = [0.0, 1.0]
    c = [1.0, 0.0]
    t = 0.0
    alpha = 0.05

    [quadrature]                # optional QuadratureSpec overrides
    abs_tol = 1e-9
    nodes = 20

Command-specific keys (``rho``, ``m``, ``seed``, ...) may sit at top level;
command-line flags take precedence over them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import DesignProblem
from .errors import CiadmitError, DomainError
from .intervals import BSFunctions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class InputError(CiadmitError):
    """A referenced file is missing or malformed."""


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def read_design_csv(path, response: str, columns=None):
    """Return (X, y, column names) from a CSV with a header row."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"design file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(row for row in fh if not row.startswith("#")))
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise InputError(f"response column {response!r} not in header {header}")
    columns = [h for h in header if h != response] if columns is None else list(columns)
    missing = [c for c in columns if c not in header]
    if missing:
        raise InputError(f"design columns {missing} not in header {header}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise InputError(f"non-numeric entry in {path}: {exc}") from exc
    index = {h: i for i, h in enumerate(header)}
    X = data[:, [index[c] for c in columns]]
    y = data[:, index[response]]
    return X, y, columns


def load_design(csv_path, config: dict):
    """Build a :class:`DesignProblem` and response vector from a CSV and config."""
    for key in ("response", "a", "c"):
        if key not in config:
            raise InputError(f"config is missing required key {key!r}")
    X, y, columns = read_design_csv(csv_path, config["response"], config.get("columns"))
    try:
        problem = DesignProblem(
            X, config["a"], config["c"], float(config.get("t", 0.0)), float(config.get("alpha", 0.05))
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CiadmitError):
            raise
        raise InputError(f"bad design specification: {exc}") from exc
    return problem, y


def load_interval(path) -> BSFunctions:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"interval file not found: {path}")
    return BSFunctions.from_json(path.read_text())


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def provenance(config: dict, seed=None) -> dict:
    return {"version": __version__, "config_hash": config_hash(config), "seed": seed}


def provenance_lines(config: dict, seed=None) -> list:
    p = provenance(config, seed)
    return [f"ciadmit {p['version']}", f"config_hash {p['config_hash']}", f"seed {p['seed']}"]


def gnuplot_script(csv_name: str, title: str = "") -> str:
    """Script plotting e and coverage against gamma from a curve CSV."""
    return "\n".join(
        [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set title '{title}'",
            "set xlabel 'gamma'",
            "set multiplot layout 2,1",
            f"plot '{csv_name}' using 1:5 with lines title 'coverage'",
            f"plot '{csv_name}' using 1:3 with lines title 'e', 1 with lines dt 2 notitle",
            "unset multiplot",
            "",
        ]
    )


def check_domain(name, value, lo=None, hi=None, integer=False):
    if integer and value != int(value):
        raise DomainError(f"{name} must be an integer, got {value}")
    if lo is not None and not value > lo:
        raise DomainError(f"{name} must exceed {lo}, got {value}")
    if hi is not None and not value < hi:
        raise DomainError(f"{name} must be below {hi}, got {value}")
    return value
