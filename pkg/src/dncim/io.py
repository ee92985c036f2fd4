"""File formats: datasets, parameters, summaries, contours and regions.

* datasets: one-column CSV with header ``y``, or a JSON array
* parameters: JSON object keyed by coordinate name
* summaries: JSON with matrices as row-major nested lists
* contours: CSV ``(coordinates..., value)`` plus a JSON sidecar holding
  everything needed to evaluate the contour again without re-simulation
* regions: JSON/CSV rows ``{alpha, coordinate, lower, upper}``
"""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from .contours import Contour, ContourKind
from .exceptions import ConfigError, DomainError
from .models import Model, model_from_spec
from .summaries import AggregatedSummary, BlockSummary

FLOAT_FMT = "{:.17g}"


def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


# -- datasets ---------------------------------------------------------------

def read_dataset(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if not isinstance(data, list):
            raise DomainError(f"{path}: expected a JSON array of numbers")
        return np.asarray(data, dtype=float)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["y"]:
            raise DomainError(f"{path}: expected a one-column CSV with header 'y', got {header}")
        try:
            values = [float(row[0]) for row in reader if row]
        except ValueError as exc:
            raise DomainError(f"{path}: {exc}") from None
    if not values:
        raise DomainError(f"{path}: no observations")
    return np.asarray(values)


def write_dataset(path, y) -> None:
    path = Path(path)
    y = np.asarray(y, dtype=float).ravel()
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps([float(v) for v in y]))
        return
    with path.open("w", newline="") as fh:
        fh.write("y\n")
        for v in y:
            fh.write(_fmt(v) + "\n")


# -- parameters -------------------------------------------------------------

def write_params(path, model: Model, theta) -> None:
    Path(path).write_text(json.dumps(model.params_to_dict(theta), indent=2))


def read_params(path, model: Model) -> np.ndarray:
    return model.params_from_dict(json.loads(Path(path).read_text()))


# -- summaries --------------------------------------------------------------

def write_block_summary(path, model: Model, summary: BlockSummary) -> None:
    Path(path).write_text(json.dumps({"model": model.spec(), **summary.to_dict()}, indent=2))


def read_block_summary(path) -> tuple[Model, BlockSummary]:
    d = json.loads(Path(path).read_text())
    return model_from_spec(d["model"]), BlockSummary.from_dict(d)


def write_aggregate(path, model: Model, agg: AggregatedSummary) -> None:
    Path(path).write_text(json.dumps({"model": model.spec(), **agg.to_dict()}, indent=2))


def read_aggregate(path) -> tuple[Model, AggregatedSummary]:
    d = json.loads(Path(path).read_text())
    return model_from_spec(d["model"]), AggregatedSummary.from_dict(d)


# -- contours ---------------------------------------------------------------

def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".json")


def _arr(x):
    return None if x is None else np.asarray(x).tolist()


def write_contour(csv_path, contour: Contour, param_names, extra: dict | None = None) -> None:
    csv_path = Path(csv_path)
    if contour.is_scalar:
        names = [param_names[contour.coordinate or 0]]
        rows = zip(contour.grid, contour.values)
        lines = [(_fmt(g), _fmt(v)) for g, v in rows]
    else:
        names = list(param_names)
        lines = [tuple(_fmt(x) for x in pt) + (_fmt(v),) for pt, v in zip(contour.grid, contour.values)]
    with csv_path.open("w", newline="") as fh:
        fh.write(",".join(names + ["value"]) + "\n")
        for row in lines:
            fh.write(",".join(row) + "\n")
    meta = {
        "kind": contour.kind.value,
        "param_names": list(param_names),
        "coordinate": contour.coordinate,
        "center": _arr(contour.center),
        "info": _arr(contour.info),
        "anchor": _arr(contour.anchor),
        "M": contour.M,
        "seed": contour.seed,
        "df": contour.df,
        "bounds": None if contour.bounds is None else [[float(a), float(b)] for a, b in np.atleast_2d(contour.bounds)],
        "thresholds": _arr(contour.thresholds),
        **(extra or {}),
    }
    sidecar_path(csv_path).write_text(json.dumps(meta, allow_nan=True))


def read_contour(csv_path) -> Contour:
    csv_path = Path(csv_path)
    meta = json.loads(sidecar_path(csv_path).read_text())
    raw = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    scalar = raw.shape[1] == 2
    grid = raw[:, 0] if scalar else raw[:, :-1]
    values = raw[:, -1]

    def opt(key):
        v = meta.get(key)
        return None if v is None else np.asarray(v, dtype=float)

    return Contour(
        ContourKind(meta["kind"]), grid, values, center=opt("center"), info=opt("info"),
        coordinate=meta.get("coordinate"), anchor=opt("anchor"), M=meta.get("M"),
        thresholds=opt("thresholds"), df=meta.get("df"), bounds=opt("bounds"), seed=meta.get("seed"),
        meta={"param_names": meta.get("param_names")},
    )


# -- regions ----------------------------------------------------------------

def region_rows(regions, param_names) -> list[dict]:
    rows = []
    for reg in regions:
        for r in reg.rows():
            r = dict(r)
            c = r["coordinate"]
            r["coordinate"] = param_names[c] if isinstance(c, (int, np.integer)) else c
            rows.append(r)
    return rows


def write_regions(path, rows: list[dict]) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            fh.write("alpha,coordinate,lower,upper\n")
            for r in rows:
                lo = "" if r["lower"] is None else _fmt(r["lower"])
                hi = "" if r["upper"] is None else _fmt(r["upper"])
                fh.write(f"{_fmt(r['alpha'])},{r['coordinate']},{lo},{hi}\n")
        return
    path.write_text(json.dumps(rows, indent=2))


# -- provenance -------------------------------------------------------------

def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def load_toml(path) -> dict:
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
