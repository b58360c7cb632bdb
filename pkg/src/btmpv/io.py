"""CSV/JSON persistence for panels, estimates and report bundles.

Every CSV starts with one comment line naming its schema and version, then a
header row. Timestamps are ISO-8601 local hours. All writes go through a
temporary file in the target directory followed by an atomic rename, and all
output is formatted deterministically so reruns are byte-identical.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .series import AlignmentError, MeterPanel

SCHEMA_VERSION = 1
PANEL_META = "panel.json"
PANEL_FILES = {
    "net": "net_pv.csv",
    "native_o": "native_nonpv.csv",
    "true_native": "truth_native_pv.csv",
    "true_gen": "truth_generation_pv.csv",
}
AGGREGATE_FILE = "aggregate_estimates.csv"
CUSTOMER_FILE = "customer_estimates.csv"
TIME_FMT = "%Y-%m-%dT%H:%M"


class PanelFormatError(ValueError):
    """Malformed or inconsistent file contents."""


def fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return f"{x:.10g}"


def _stamps(start: datetime, n: int) -> list[str]:
    return [(start + timedelta(hours=k)).strftime(TIME_FMT) for k in range(n)]


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, data: Mapping) -> None:
    atomic_write(path, json.dumps(_json_clean(data), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise PanelFormatError(f"{path}: invalid JSON ({exc})") from exc


def write_table(path, kind: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Generic versioned CSV; floats are formatted with :func:`fmt`."""
    lines = [f"# btmpv {kind} v{SCHEMA_VERSION}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def write_wide(path, kind: str, start: datetime, ids: Sequence[str], values: np.ndarray) -> None:
    """``timestamp,<id>...`` matrix file."""
    values = np.asarray(values, dtype=float)
    lines = [f"# btmpv {kind} v{SCHEMA_VERSION}", ",".join(["timestamp", *ids])]
    for ts, row in zip(_stamps(start, values.shape[0]), values):
        lines.append(ts + "," + ",".join(map(fmt, row)))
    atomic_write(path, "\n".join(lines) + "\n")


def _read_lines(path, kind: str) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# btmpv "):
        raise PanelFormatError(f"{path}: missing schema comment line")
    parts = lines[0][2:].split()
    if len(parts) != 3 or parts[1] != kind:
        raise PanelFormatError(f"{path}: expected a '{kind}' file, found '{lines[0]}'")
    if parts[2] != f"v{SCHEMA_VERSION}":
        raise PanelFormatError(f"{path}: unsupported schema version {parts[2]}")
    if len(lines) < 2:
        raise PanelFormatError(f"{path}: missing header row")
    return lines[1:]


def _check_hourly(path, stamps: Sequence[str]) -> datetime:
    try:
        times = [datetime.strptime(s, TIME_FMT) for s in stamps]
    except ValueError as exc:
        raise PanelFormatError(f"{path}: bad timestamp ({exc})") from exc
    if not times:
        raise PanelFormatError(f"{path}: no data rows")
    for k in range(1, len(times)):
        if times[k] - times[k - 1] != timedelta(hours=1):
            raise AlignmentError(f"{path}: row {k + 1} breaks hourly spacing at {stamps[k]}")
    return times[0]


def read_wide(path, kind: str) -> tuple[datetime, list[str], np.ndarray]:
    lines = _read_lines(path, kind)
    header = lines[0].split(",")
    if header[0] != "timestamp" or len(header) < 2:
        raise PanelFormatError(f"{path}: header must be 'timestamp,<id>...'")
    ids = header[1:]
    if len(set(ids)) != len(ids):
        raise PanelFormatError(f"{path}: duplicate column ids")
    stamps, rows = [], []
    for k, line in enumerate(lines[1:], start=3):
        cells = line.split(",")
        if len(cells) != len(header):
            raise PanelFormatError(f"{path}: line {k} has {len(cells)} fields, expected {len(header)}")
        stamps.append(cells[0])
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise PanelFormatError(f"{path}: line {k}: {exc}") from exc
    start = _check_hourly(path, stamps)
    values = np.array(rows, dtype=float)
    if not np.all(np.isfinite(values)):
        raise PanelFormatError(f"{path}: non-finite readings")
    return start, ids, values


# ---- panels ---------------------------------------------------------------

def write_panel(panel: MeterPanel, directory, scenario: Mapping | None = None) -> None:
    d = Path(directory)
    write_wide(d / PANEL_FILES["net"], "net-demand", panel.start, panel.pv_ids, panel.net)
    write_wide(d / PANEL_FILES["native_o"], "native-demand", panel.start, panel.nonpv_ids, panel.native_o)
    files = {"net": PANEL_FILES["net"], "native_o": PANEL_FILES["native_o"]}
    if panel.has_truth:
        write_wide(d / PANEL_FILES["true_native"], "native-demand", panel.start, panel.pv_ids, panel.true_native)
        write_wide(d / PANEL_FILES["true_gen"], "generation", panel.start, panel.pv_ids, panel.true_gen)
        files.update(true_native=PANEL_FILES["true_native"], true_gen=PANEL_FILES["true_gen"])
    meta = {
        "schema": f"btmpv-panel/{SCHEMA_VERSION}",
        "start": panel.start.strftime(TIME_FMT),
        "n_hours": panel.n_hours,
        "n_with_pv": len(panel.pv_ids),
        "n_without_pv": len(panel.nonpv_ids),
        "files": files,
        "meta": dict(panel.meta),
    }
    if scenario is not None:
        meta["scenario"] = dict(scenario)
    write_json(d / PANEL_META, meta)


def read_panel_meta(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"panel directory not found: {d}")
    return read_json(d / PANEL_META)


def read_panel(directory) -> MeterPanel:
    """Load a panel directory; ground truth is attached when its files are listed."""
    d = Path(directory)
    meta = read_panel_meta(d)
    files = meta.get("files", {})
    for key in ("net", "native_o"):
        if key not in files:
            raise PanelFormatError(f"{d / PANEL_META}: no '{key}' file listed")
    start, pv_ids, net = read_wide(d / files["net"], "net-demand")
    start_o, nonpv_ids, native_o = read_wide(d / files["native_o"], "native-demand")
    if start_o != start or native_o.shape[0] != net.shape[0]:
        raise AlignmentError("net and non-PV files cover different hours")
    truth = {}
    if "true_native" in files or "true_gen" in files:
        s1, ids1, tn = read_wide(d / files["true_native"], "native-demand")
        s2, ids2, tg = read_wide(d / files["true_gen"], "generation")
        if s1 != start or s2 != start or ids1 != pv_ids or ids2 != pv_ids:
            raise AlignmentError("ground-truth files do not match the net-demand file")
        truth = {"true_native": tn, "true_gen": tg}
    return MeterPanel(start, pv_ids, net, nonpv_ids, native_o, meta=meta.get("meta", {}), **truth)


# ---- estimates --------------------------------------------------------------

def write_estimates(directory, panel: MeterPanel, P_w_hat, G_w_hat, r_hat, G_hat, P_hat) -> None:
    d = Path(directory)
    stamps = _stamps(panel.start, panel.n_hours)
    rows = zip(stamps, np.asarray(P_w_hat, float), np.asarray(G_w_hat, float), np.asarray(r_hat, float))
    write_table(d / AGGREGATE_FILE, "aggregate-estimates", ["timestamp", "P_w_hat", "G_w_hat", "r_hat"], list(rows))
    G_hat = np.asarray(G_hat, dtype=float)
    P_hat = np.asarray(P_hat, dtype=float)
    lines = [f"# btmpv customer-estimates v{SCHEMA_VERSION}", "timestamp,customer_id,G_hat,P_hat"]
    for t, ts in enumerate(stamps):
        for i, cid in enumerate(panel.pv_ids):
            lines.append(f"{ts},{cid},{fmt(G_hat[t, i])},{fmt(P_hat[t, i])}")
    atomic_write(d / CUSTOMER_FILE, "\n".join(lines) + "\n")


def read_estimates(directory, panel: MeterPanel) -> dict:
    """Estimates aligned to ``panel``: keys P_w_hat, G_w_hat, r_hat, G_hat, P_hat."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"estimates directory not found: {d}")
    lines = _read_lines(d / AGGREGATE_FILE, "aggregate-estimates")
    if lines[0] != "timestamp,P_w_hat,G_w_hat,r_hat":
        raise PanelFormatError(f"{d / AGGREGATE_FILE}: unexpected header")
    cells = [line.split(",") for line in lines[1:]]
    start = _check_hourly(d / AGGREGATE_FILE, [c[0] for c in cells])
    if start != panel.start or len(cells) != panel.n_hours:
        raise AlignmentError("aggregate estimates do not cover the panel's hours")
    agg = np.array([[float(x) for x in c[1:]] for c in cells])
    lines = _read_lines(d / CUSTOMER_FILE, "customer-estimates")
    if lines[0] != "timestamp,customer_id,G_hat,P_hat":
        raise PanelFormatError(f"{d / CUSTOMER_FILE}: unexpected header")
    col = {cid: i for i, cid in enumerate(panel.pv_ids)}
    row = {ts: t for t, ts in enumerate(_stamps(panel.start, panel.n_hours))}
    G_hat = np.full(panel.net.shape, np.nan)
    P_hat = np.full(panel.net.shape, np.nan)
    for k, line in enumerate(lines[1:], start=3):
        c = line.split(",")
        if len(c) != 4 or c[0] not in row or c[1] not in col:
            raise PanelFormatError(f"{d / CUSTOMER_FILE}: line {k} does not match the panel")
        G_hat[row[c[0]], col[c[1]]] = float(c[2])
        P_hat[row[c[0]], col[c[1]]] = float(c[3])
    if np.isnan(G_hat).any() or np.isnan(P_hat).any():
        raise PanelFormatError(f"{d / CUSTOMER_FILE}: estimates missing for some customer-hours")
    return {"P_w_hat": agg[:, 0], "G_w_hat": agg[:, 1], "r_hat": agg[:, 2], "G_hat": G_hat, "P_hat": P_hat}
