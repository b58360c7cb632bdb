"""Command-line entry point: synth, noise, disaggregate, evaluate, sweep.

Exit codes: 0 success, 1 computational failure, 2 I/O or configuration failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields, replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import io
from .aggregate import RatioError
from .allocation import AllocationError
from .gpr import GprFitError
from .lsq import ActiveSetError
from .metrics import NOISE_CASES, PROBS, NoiseSpec, apply_noise
from .pipeline import RunConfig, disaggregate, evaluate_estimates, run_sweeps
from .series import AlignmentError, DegenerateSeriesError, MeterPanel
from .synth import ScenarioConfig, build_panel

log = logging.getLogger("btmpv")

CONFIG_KEYS = {"scenario", "run", "noise", "unify_divisor"}
EXIT_OK, EXIT_COMPUTE, EXIT_IO = 0, 1, 2


class ConfigError(Exception):
    pass


# ---- configuration ----------------------------------------------------------

def load_config(path: str | None) -> dict:
    """Read a JSON run configuration; a missing ``path`` means all defaults."""
    if path is None:
        return {}
    data = io.read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _scenario(cfg: dict, panel_meta: dict | None = None, seed: int | None = None) -> ScenarioConfig:
    # explicit config wins, then the panel's own sidecar, then defaults
    raw = cfg.get("scenario")
    if raw is None and panel_meta is not None:
        raw = panel_meta.get("scenario")
    try:
        sc = ScenarioConfig.from_dict(raw or {})
        return sc if seed is None else replace(sc, seed=seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario config: {exc}") from exc


def _run_config(cfg: dict, args) -> RunConfig:
    raw = dict(cfg.get("run", {}))
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown run keys: {sorted(unknown)}")
    overrides = {
        "window_hours": getattr(args, "windows", None),
        "case": getattr(args, "case", None),
        "lam": getattr(args, "lam", None),
        "p0": getattr(args, "p0", None),
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "night_hours" in raw:
        raw["night_hours"] = tuple(int(h) for h in raw["night_hours"])
    try:
        run = RunConfig(**raw)
        run.mask  # validates the night hours
        if run.window_hours < 168:
            raise ValueError(f"window length {run.window_hours} h is shorter than one week")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc
    return run


def _noise_spec(cfg: dict, args) -> NoiseSpec:
    raw = dict(cfg.get("noise", {}))
    if args.noise_case is not None:
        base = NOISE_CASES[args.noise_case]
        raw.update(packet_loss_rate=base.packet_loss_rate, measurement_error=base.measurement_error)
    if args.loss is not None:
        raw["packet_loss_rate"] = args.loss
    if args.error is not None:
        raw["measurement_error"] = args.error
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        return NoiseSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid noise config: {exc}") from exc


def _load_panel(path: str) -> tuple[MeterPanel, dict]:
    return io.read_panel(path), io.read_panel_meta(path)


def _out(args) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path is not a directory: {out}")
    return out


# ---- commands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    scenario = _scenario(cfg, seed=args.seed)
    out = _out(args)
    panel = build_panel(scenario)
    io.write_panel(panel, out, scenario.to_dict())
    io.write_json(out / "config.json", {"scenario": scenario.to_dict()})
    print(f"wrote panel: {panel.n_hours} hours, {len(panel.pv_ids)} PV + {len(panel.nonpv_ids)} non-PV customers -> {out}")
    return EXIT_OK


def cmd_noise(args) -> int:
    cfg = load_config(args.config)
    spec = _noise_spec(cfg, args)
    panel, meta = _load_panel(args.panel)
    out = _out(args)
    noisy = apply_noise(panel, spec)
    io.write_panel(noisy, out, meta.get("scenario"))
    io.write_json(out / "config.json", {"noise": asdict(spec)})
    print(f"wrote noisy panel (loss {spec.packet_loss_rate:g}, error {spec.measurement_error:g}) -> {out}")
    return EXIT_OK


def _solution_summary(panel: MeterPanel, result) -> dict:
    windows = []
    for k, (w, sol, peaks) in enumerate(zip(result.customers.windows, result.customers.solutions, result.customers.peaks)):
        windows.append({
            "index": k,
            "start": (panel.start + timedelta(hours=w.start)).strftime(io.TIME_FMT),
            "hours": w.length,
            "r_hat": result.aggregate[k].r_hat,
            "objective": sol.objective,
            "kkt_residual": sol.kkt_residual,
            "iterations": sol.iterations,
            "gamma": dict(zip(panel.pv_ids, sol.gamma)),
            "peak_estimate": dict(zip(panel.pv_ids, peaks)),
            "K": {cid: sol.K[:, i] for i, cid in enumerate(panel.pv_ids)},
        })
    return {"candidate_azimuths": list(result.candidates.azimuths), "windows": windows}


def cmd_disaggregate(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    panel, meta = _load_panel(args.panel)
    scenario = _scenario(cfg, meta, args.seed)
    out = _out(args)
    result = disaggregate(panel, scenario, run, jobs=args.jobs)
    io.write_estimates(
        out, panel, result.P_w_hat, result.G_w_hat, result.r_hat, result.customers.G_hat, result.customers.P_hat
    )
    labels = [f"az{int(round(a)):03d}" for a in result.candidates.azimuths]
    io.write_wide(out / "candidates.csv", "candidates", panel.start, labels, result.candidates.G_e)
    io.write_json(out / "solution_summary.json", _solution_summary(panel, result))
    for az, model in sorted(result.models.items()):
        (out / "models").mkdir(parents=True, exist_ok=True)
        model.save(out / "models" / f"gpr_az{int(round(az)):03d}.csv")
    io.write_json(out / "config.json", {"scenario": scenario.to_dict(), "run": asdict(run)})
    for k, v in sorted(result.timings.items()):
        log.info("%s: %.3f s", k, v)
    worst = max(s.kkt_residual for s in result.customers.solutions)
    print(f"disaggregated {len(result.customers.windows)} windows (case {run.case}, max KKT residual {worst:.2e}) -> {out}")
    return EXIT_OK


def _write_report(out: Path, report) -> dict:
    rows = [(t, m.mape, m.mse, m.cv) for t, m in sorted(report.aggregate.items())]
    io.write_table(out / "aggregate_metrics.csv", "aggregate-metrics", ["target", "mape", "mse", "cv"], rows)
    rows = []
    for target in ("G", "P"):
        rows += [(m.scope, target, m.mape, m.mse, m.cv) for m in report.customers[target]]
    io.write_table(out / "customer_metrics.csv", "customer-metrics", ["customer_id", "target", "mape", "mse", "cv"], rows)
    cdf = report.cdf_table(PROBS)
    rows = [(name, *(vals[p] for p in PROBS)) for name, vals in cdf.items()]
    io.write_table(out / "table1_cdf.csv", "cdf-table", ["metric", *(f"{p:g}" for p in PROBS)], rows)
    summary = {
        "aggregate_mape_G": report.aggregate["G"].mape,
        "aggregate_mape_P": report.aggregate["P"].mape,
        "average_mape_G": report.average_mape("G"),
        "average_mape_P": report.average_mape("P"),
        "median_mape_G": report.median_mape("G"),
        "median_mape_P": report.median_mape("P"),
        "n_customers": len(report.customers["G"]),
    }
    io.write_json(out / "summary.json", summary)
    return summary


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    panel, _ = _load_panel(args.panel)
    if not panel.has_truth:
        raise ConfigError("evaluation requires synthetic ground truth")
    est = io.read_estimates(args.estimates, panel)
    out = _out(args)
    report = evaluate_estimates(
        panel, est["G_w_hat"], est["P_w_hat"], est["G_hat"], est["P_hat"], run.mask, bool(cfg.get("unify_divisor", False))
    )
    s = _write_report(out, report)
    print(
        f"aggregate MAPE G {s['aggregate_mape_G']:.3f}% P {s['aggregate_mape_P']:.3f}%; "
        f"customer average G {s['average_mape_G']:.3f}% median G {s['median_mape_G']:.3f}% -> {out}"
    )
    return EXIT_OK


def _table_rows(rows: list, key: str) -> tuple[list, list]:
    cols = [key] + [c for c in ("n_candidates", "agg_mape_G", "agg_mape_P", "avg_mape_G", "avg_mape_P") if c in rows[0]]
    return cols, [[r[c] for c in cols] for r in rows]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    if args.panel:
        panel, meta = _load_panel(args.panel)
    else:
        meta = None
    scenario = _scenario(cfg, meta)
    if not args.panel:
        panel = build_panel(scenario)
    if not panel.has_truth:
        raise ConfigError("evaluation requires synthetic ground truth")
    out = _out(args)
    noise_seed = 0 if args.seed is None else args.seed
    tables = run_sweeps(panel, scenario, run, jobs=args.jobs, noise_seed=noise_seed)
    names = {
        "candidates": ("table2_candidates.csv", "case"),
        "window": ("table3_window.csv", "months"),
        "lambda": ("lambda.csv", "lambda"),
        "noise": ("table4_5_noise.csv", "case"),
    }
    for name, (fname, key) in names.items():
        cols, rows = _table_rows(tables[name], key)
        io.write_table(out / fname, f"sweep-{name}", cols, rows)
    cdf = tables["cdf"]
    io.write_table(
        out / "table1_cdf.csv", "cdf-table", ["metric", *(f"{p:g}" for p in PROBS)],
        [(n, *(v[p] for p in PROBS)) for n, v in cdf.items()],
    )
    # wall-clock runtimes are the only nondeterministic output and live apart
    io.write_table(
        out / "timings.csv", "timings", ["case", "runtime_s"],
        [(r["case"], r["runtime_s"]) for r in tables["candidates"]],
    )
    io.write_json(out / "config.json", {"scenario": scenario.to_dict(), "run": asdict(run), "noise_seed": noise_seed})
    for r in tables["candidates"]:
        print(f"case {r['case']}: average MAPE G {r['avg_mape_G']:.4f}%, runtime {r['runtime_s']:.2f} s")
    print(f"sweep tables -> {out}")
    return EXIT_OK


# ---- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="btmpv", description="Behind-the-meter PV disaggregation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, panel=True, run=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        if panel:
            p.add_argument("--panel", required=True, help="panel directory")
        if run:
            p.add_argument("--windows", type=int, default=None, help="window length in hours (default 720)")
            p.add_argument("--case", choices=("I", "II", "III"), default=None, help="candidate azimuth set")
            p.add_argument("--lambda", dest="lam", type=float, default=None, help="peak-slack penalty")
            p.add_argument("--p0", type=float, default=None, help="slack upper bound, kW")
            p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("synth", help="generate a synthetic panel with ground truth")
    common(p, panel=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise", help="apply packet loss and meter error to a panel")
    common(p)
    p.add_argument("--noise-case", type=int, choices=sorted(NOISE_CASES), default=None)
    p.add_argument("--loss", type=float, default=None, help="packet loss rate in [0, 1]")
    p.add_argument("--error", type=float, default=None, help="multiplicative meter error bound")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("disaggregate", help="run both estimation layers")
    common(p, run=True)
    p.set_defaults(func=cmd_disaggregate)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    common(p)
    p.add_argument("--estimates", required=True, help="directory written by disaggregate")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="candidate, lambda, window and noise sweeps")
    common(p, panel=False, run=True)
    p.add_argument("--panel", default=None, help="panel directory (default: synthesize the configured scenario)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, PermissionError, io.PanelFormatError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RatioError, AllocationError, GprFitError, ActiveSetError, DegenerateSeriesError,
            ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
