"""File formats.

Price panel (long CSV, UTF-8, LF)::

    station_id,date,price
    A,2023-04-03,1.859

Model configuration (JSON, unknown keys rejected)::

    {"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 1, "count": 4}],
     "sigmas": 0.027,                      # scalar or one value per agent
     "tolerances": {"root_tol": 1e-12, "fixed_point_tol": 1e-10},
     "seed": 0, "days": 77, "degenerate": false}

Initial prices: a CSV with a ``price`` column (optionally preceded by an
``agent`` column), one row per agent in population order, or a price panel
whose first date is used.

Trajectories are written as CSV ``day,mean,p_1,...,p_m`` with 6 decimals;
every other result is pretty-printed JSON.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .calibration import ClusterAssignment, FitResult, PricePanel
from .dynamics import ContractionReport, EquilibriumResult, Trajectory
from .errors import CoverageError, FormatError, ValidationError
from .model import ClusterParams, MarketState, Population
from .numerics import DEFAULT_ROOT_TOL

PANEL_HEADER = ["station_id", "date", "price"]
PRICE_DECIMALS = 6


@dataclass(frozen=True)
class SolverSettings:
    root_tol: float = DEFAULT_ROOT_TOL
    fixed_point_tol: float = 1e-10
    seed: int = 0
    days: int | None = None


def _atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# -- price panels -------------------------------------------------------------

def read_price_panel(path) -> PricePanel:
    """Parse a long-format panel and pivot it to one series per station.

    Stations keep their order of first appearance; dates are sorted.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PANEL_HEADER:
            raise FormatError(
                f"{path}: expected header '{','.join(PANEL_HEADER)}', got "
                f"{','.join(header) if header else 'an empty file'!r}"
            )
        values: dict[tuple[str, str], float] = {}
        stations: dict[str, None] = {}
        dates: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            sid, date, raw = (v.strip() for v in row)
            if not sid:
                raise FormatError(f"{path}:{lineno}: empty station_id")
            try:
                _dt.date.fromisoformat(date)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: date {date!r} is not YYYY-MM-DD") from None
            try:
                price = float(raw)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: price {raw!r} is not a number") from None
            if not math.isfinite(price):
                raise FormatError(f"{path}:{lineno}: price must be finite")
            if (sid, date) in values:
                raise FormatError(f"{path}:{lineno}: duplicate entry for ({sid}, {date})")
            values[(sid, date)] = price
            stations.setdefault(sid)
            dates.add(date)

    ids = list(stations)
    days = sorted(dates)
    missing = [(s, d) for s in ids for d in days if (s, d) not in values]
    if missing:
        shown = ", ".join(f"({s}, {d})" for s, d in missing[:20])
        more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
        raise CoverageError(f"{path}: panel is not rectangular; missing {shown}{more}", missing)
    prices = np.array([[values[(s, d)] for d in days] for s in ids])
    return PricePanel(tuple(ids), tuple(days), prices)


def write_price_panel(panel: PricePanel, path) -> None:
    lines = [",".join(PANEL_HEADER)]
    for sid, row in zip(panel.station_ids, panel.prices):
        for date, price in zip(panel.dates, row):
            lines.append(f"{sid},{date},{float(price)!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_initial_state(path) -> MarketState:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    header = [h.strip() for h in header] if header else []
    if header == PANEL_HEADER:
        return read_price_panel(path).initial_state()
    if header not in (["price"], ["agent", "price"]):
        raise FormatError(
            f"{path}: initial prices need header 'price', 'agent,price' or "
            f"'{','.join(PANEL_HEADER)}'"
        )
    prices = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                prices.append(float(row[-1]))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: price {row[-1]!r} is not a number") from None
    if not prices:
        raise FormatError(f"{path}: no prices found")
    return MarketState(prices)


def write_initial_state(state: MarketState, path) -> None:
    _atomic_write(path, "price\n" + "".join(f"{float(p)!r}\n" for p in state.prices))


# -- configuration ------------------------------------------------------------

_CONFIG_KEYS = {"clusters", "sigmas", "tolerances", "seed", "days", "degenerate"}
_CLUSTER_KEYS = {"alpha", "beta", "gamma", "delta", "count"}
_TOL_KEYS = {"root_tol", "fixed_point_tol"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ValidationError(f"{where}: unknown field(s) {', '.join(extra)}")


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _int(value: Any, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValidationError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def parse_config(doc: Any) -> tuple[Population, SolverSettings]:
    if not isinstance(doc, dict):
        raise ValidationError("config: top level must be a JSON object")
    _reject_unknown(doc, _CONFIG_KEYS, "config")
    for key in ("clusters", "sigmas"):
        if key not in doc:
            raise ValidationError(f"config: missing required field '{key}'")
    degenerate = doc.get("degenerate", False)
    if not isinstance(degenerate, bool):
        raise ValidationError("degenerate: expected true or false")

    raw = doc["clusters"]
    if not isinstance(raw, list) or not raw:
        raise ValidationError("clusters: expected a non-empty list")
    clusters, counts = [], []
    for j, c in enumerate(raw):
        where = f"clusters[{j}]"
        if not isinstance(c, dict):
            raise ValidationError(f"{where}: expected an object")
        _reject_unknown(c, _CLUSTER_KEYS, where)
        for key in ("alpha", "beta", "gamma", "delta", "count"):
            if key not in c:
                raise ValidationError(f"{where}: missing field '{key}'")
        vals = {k: _number(c[k], f"{where}.{k}") for k in ("alpha", "beta", "gamma", "delta")}
        if not degenerate and vals["delta"] <= 0:
            raise ValidationError(
                f"{where}.delta: must be > 0 (set \"degenerate\": true for gamma = delta = 0)"
            )
        try:
            clusters.append(ClusterParams(**vals, degenerate=degenerate))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        counts.append(_int(c["count"], f"{where}.count", 0))
    m = sum(counts)
    if m < 2:
        raise ValidationError(f"clusters: counts sum to {m}, need at least 2 agents")

    sig = doc["sigmas"]
    if isinstance(sig, list):
        if len(sig) != m:
            raise ValidationError(f"sigmas: expected {m} values, got {len(sig)}")
        sig = [_number(s, f"sigmas[{i}]") for i, s in enumerate(sig)]
        bad = [i for i, s in enumerate(sig) if s <= 0]
        if bad:
            raise ValidationError(f"sigmas[{bad[0]}]: must be > 0")
    else:
        sig = _number(sig, "sigmas")
        if sig <= 0:
            raise ValidationError("sigmas: must be > 0")

    tols = doc.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ValidationError("tolerances: expected an object")
    _reject_unknown(tols, _TOL_KEYS, "tolerances")
    settings = {}
    for key in sorted(_TOL_KEYS):
        if key in tols:
            v = _number(tols[key], f"tolerances.{key}")
            if v <= 0:
                raise ValidationError(f"tolerances.{key}: must be > 0")
            settings[key] = v
    if "seed" in doc:
        settings["seed"] = _int(doc["seed"], "seed", 0)
    if "days" in doc:
        settings["days"] = _int(doc["days"], "days", 1)

    pop = Population.from_counts(clusters, counts, sig)
    return pop, SolverSettings(**settings)


def read_config(path) -> tuple[Population, SolverSettings]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def config_document(pop: Population, settings: SolverSettings = SolverSettings()) -> dict:
    """Inverse of :func:`parse_config` for populations laid out cluster by cluster."""
    if np.any(np.diff(pop.labels) < 0):
        raise ValidationError("agents must be grouped by cluster to serialise as counts")
    sig = pop.sigmas
    doc = {
        "clusters": [
            {"alpha": c.alpha, "beta": c.beta, "gamma": c.gamma, "delta": c.delta, "count": n}
            for c, n in zip(pop.clusters, pop.counts)
        ],
        "sigmas": float(sig[0]) if np.all(sig == sig[0]) else sig.tolist(),
        "tolerances": {"root_tol": settings.root_tol, "fixed_point_tol": settings.fixed_point_tol},
        "seed": settings.seed,
    }
    if settings.days is not None:
        doc["days"] = settings.days
    if pop.degenerate:
        doc["degenerate"] = True
    return doc


def write_config(pop: Population, path, settings: SolverSettings = SolverSettings()) -> None:
    _atomic_write(path, json.dumps(config_document(pop, settings), indent=2) + "\n")


# -- results ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.{PRICE_DECIMALS}f}"


def trajectory_csv(traj: Trajectory) -> str:
    head = ["day", "mean"] + [f"p_{i + 1}" for i in range(traj.m)]
    lines = [",".join(head)]
    for n, (mean, row) in enumerate(zip(traj.means, traj.prices)):
        lines.append(",".join([str(n), _fmt(mean)] + [_fmt(p) for p in row]))
    return "\n".join(lines) + "\n"


def read_trajectory(path) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["day", "mean"]:
            raise FormatError(f"{path}: expected a trajectory header 'day,mean,p_1,...'")
        rows = [[float(v) for v in r[2:]] for r in reader if r]
    return Trajectory(np.array(rows))


def result_document(result) -> dict:
    if isinstance(result, (EquilibriumResult, FitResult, ClusterAssignment, ContractionReport)):
        return result.to_dict()
    raise TypeError(f"cannot serialise {type(result).__name__}")


def write_json(doc: dict, path) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, allow_nan=True) + "\n")


def write_results(result, path) -> None:
    """Trajectory -> CSV; equilibrium, fit, clustering and contraction results -> JSON."""
    try:
        if isinstance(result, Trajectory):
            _atomic_write(path, trajectory_csv(result))
        else:
            write_json(result_document(result), path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _load_json(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None


def read_assignment(path) -> ClusterAssignment:
    doc = _load_json(path)
    try:
        return ClusterAssignment(
            k=doc["k"],
            labels=doc["labels"],
            centroids=doc["centroids"],
            seed=doc.get("seed", 0),
            inertia_history=doc.get("inertia_history", ()),
            station_ids=doc.get("station_ids"),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a cluster assignment ({exc})") from None


def read_sigmas(path) -> tuple[list[str], np.ndarray]:
    """Station ids and sigmas from the JSON written by the ``sigmas`` command."""
    doc = _load_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("sigmas"), dict):
        raise FormatError(f"{path}: expected an object with a 'sigmas' mapping")
    ids = list(doc["sigmas"])
    vals = np.array([_number(doc["sigmas"][s], f"sigmas.{s}") for s in ids])
    if np.any(vals <= 0):
        raise ValidationError(f"{path}: sigmas must be > 0")
    return ids, vals


def read_param_start(path) -> np.ndarray:
    """Flat parameter vector from a fit result (``params``) or config (``clusters``)."""
    doc = _load_json(path)
    entries = None
    if isinstance(doc, dict):
        entries = doc.get("params", doc.get("clusters"))
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{path}: expected a 'params' or 'clusters' list")
    try:
        return np.array([_number(e[k], f"{path}[{i}].{k}")
                         for i, e in enumerate(entries)
                         for k in ("alpha", "beta", "gamma", "delta")])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: parameter entry missing {exc}") from None

