"""End-to-end disaggregation runs, evaluation and parameter sweeps."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import aggregate as agg
from .allocation import DEFAULT_LAMBDA, DEFAULT_P0, CustomerEstimates, run_customer_layer
from .gpr import AZIMUTH_CASES, CandidateSet, GprModel, build_candidate_set, train_gpr
from .metrics import NOISE_CASES, PROBS, MetricSet, NoiseSpec, apply_noise, metric_set, percentile_table
from .series import DEFAULT_WINDOW_HOURS, DayNightMask, HourlySeries, MeterPanel, make_windows
from .synth import ScenarioConfig, pvwatts_surrogate, training_clouds

log = logging.getLogger(__name__)

SURROGATE_HOURS = 8760
LAMBDA_GRID = (100.0, 200.0, 300.0, 400.0, 500.0)
MONTH_GRID = (1, 2, 3, 4)


@dataclass(frozen=True)
class RunConfig:
    window_hours: int = DEFAULT_WINDOW_HOURS
    case: str = "III"
    lam: float = DEFAULT_LAMBDA
    p0: float = DEFAULT_P0
    nonneg_weights: bool = True
    night_hours: tuple = (21, 22, 23, 0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.case not in AZIMUTH_CASES:
            raise ValueError(f"unknown azimuth case {self.case!r}; expected one of {sorted(AZIMUTH_CASES)}")
        if not self.lam > 0 or self.p0 < 0:
            raise ValueError("lambda must be positive and p0 nonnegative")

    @property
    def mask(self) -> DayNightMask:
        return DayNightMask(frozenset(self.night_hours))

    @property
    def azimuths(self) -> tuple:
        return AZIMUTH_CASES[self.case]


def train_models(
    scenario: ScenarioConfig, azimuths: Sequence[float], mask: DayNightMask | None = None, jobs: int = 1
) -> dict:
    """One regression model per non-south azimuth, trained on weather-year surrogate curves."""
    cloud = training_clouds(scenario, SURROGATE_HOURS)
    surrogate_cfg = replace(scenario, days=SURROGATE_HOURS // 24)
    south = pvwatts_surrogate(180.0, surrogate_cfg, cloud)
    todo = [float(a) for a in azimuths if float(a) != 180.0]

    def fit(az: float) -> GprModel:
        return train_gpr(south, pvwatts_surrogate(az, surrogate_cfg, cloud), az, mask=mask)

    return dict(zip(todo, _map(fit, todo, jobs)))


class ModelCache:
    """Trained models keyed by scenario geometry and azimuth; safe to share across runs."""

    def __init__(self):
        self._models: dict = {}

    @staticmethod
    def _key(scenario: ScenarioConfig, az: float, mask: DayNightMask):
        return (scenario.seed, scenario.latitude, scenario.longitude, scenario.tz_meridian,
                scenario.tilt, scenario.start, tuple(sorted(mask.nocturnal_hours)), float(az))

    def get(self, scenario: ScenarioConfig, azimuths: Sequence[float], mask: DayNightMask) -> dict:
        missing = [a for a in azimuths if float(a) != 180.0 and self._key(scenario, a, mask) not in self._models]
        if missing:
            for az, m in train_models(scenario, missing, mask).items():
                self._models[self._key(scenario, az, mask)] = m
        return {float(a): self._models[self._key(scenario, a, mask)] for a in azimuths if float(a) != 180.0}


@dataclass
class DisaggregationResult:
    aggregate: list
    P_w_hat: np.ndarray
    G_w_hat: np.ndarray
    r_hat: np.ndarray
    candidates: CandidateSet
    customers: CustomerEstimates
    config: RunConfig
    timings: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def disaggregate(
    panel: MeterPanel,
    scenario: ScenarioConfig,
    config: RunConfig = RunConfig(),
    models: Mapping[float, GprModel] | None = None,
    jobs: int = 1,
) -> DisaggregationResult:
    """Both layers over every window of the panel.

    ``scenario`` supplies the location and array geometry for the surrogate
    training curves; the panel's own ground truth is never consulted.
    """
    mask = config.mask
    t0 = time.perf_counter()
    windows = make_windows(panel.n_hours, config.window_hours)
    estimates = agg.run_aggregate_layer(panel, mask, windows)
    P_w_hat, G_w_hat, r_hat = agg.concatenate(estimates)
    t1 = time.perf_counter()
    if models is None:
        models = train_models(scenario, config.azimuths, mask, jobs)
    t2 = time.perf_counter()
    candidates = build_candidate_set(HourlySeries(panel.start, G_w_hat), config.azimuths, models, mask)
    t3 = time.perf_counter()
    customers = run_customer_layer(panel, estimates, candidates, config.lam, config.p0, mask, config.nonneg_weights)
    t4 = time.perf_counter()
    timings = {"aggregate": t1 - t0, "training": t2 - t1, "candidates": t3 - t2, "allocation": t4 - t3, "total": t4 - t0}
    return DisaggregationResult(estimates, P_w_hat, G_w_hat, r_hat, candidates, customers, config, timings, dict(models))


@dataclass
class EvalReport:
    aggregate: dict  # target -> MetricSet
    customers: dict  # target -> list[MetricSet]

    def average_mape(self, target: str) -> float:
        return float(np.mean([m.mape for m in self.customers[target]]))

    def median_mape(self, target: str) -> float:
        return percentile_table([m.mape for m in self.customers[target]], (0.5,))[0.5]

    def cdf_table(self, probs: Sequence[float] = PROBS) -> dict:
        rows = {}
        for metric in ("mape", "mse", "cv"):
            for target in ("G", "P"):
                vals = [getattr(m, metric) for m in self.customers[target]]
                if all(np.isnan(vals)):
                    # every CV undefined (exact estimates): nothing to rank
                    rows[f"{metric}_{target}"] = {p: float("nan") for p in probs}
                else:
                    rows[f"{metric}_{target}"] = percentile_table(vals, probs)
        return rows


def evaluate_estimates(
    panel: MeterPanel,
    G_w_hat: np.ndarray,
    P_w_hat: np.ndarray,
    G_hat: np.ndarray,
    P_hat: np.ndarray,
    mask: DayNightMask | None = None,
    unify_divisor: bool = False,
) -> EvalReport:
    """Score estimate arrays against the panel's ground truth."""
    if not panel.has_truth:
        raise ValueError("evaluation requires synthetic ground truth")
    mask = mask or DayNightMask()
    day = ~mask.is_night(panel.hours())
    aggregate = {
        "G": metric_set(G_w_hat, panel.true_gen.sum(axis=1), day, "G"),
        "P": metric_set(P_w_hat, panel.true_native.sum(axis=1), day, "P"),
    }
    customers: dict[str, list[MetricSet]] = {"G": [], "P": []}
    for i, cid in enumerate(panel.pv_ids):
        customers["G"].append(metric_set(G_hat[:, i], panel.true_gen[:, i], day, "G", cid, unify_divisor))
        customers["P"].append(metric_set(P_hat[:, i], panel.true_native[:, i], day, "P", cid, unify_divisor))
    return EvalReport(aggregate, customers)


def evaluate(panel: MeterPanel, result: DisaggregationResult, unify_divisor: bool = False) -> EvalReport:
    return evaluate_estimates(
        panel, result.G_w_hat, result.P_w_hat, result.customers.G_hat, result.customers.P_hat,
        result.config.mask, unify_divisor,
    )


def _summary_row(report: EvalReport) -> dict:
    return {
        "agg_mape_G": report.aggregate["G"].mape,
        "agg_mape_P": report.aggregate["P"].mape,
        "avg_mape_G": report.average_mape("G"),
        "avg_mape_P": report.average_mape("P"),
    }


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_sweeps(
    panel: MeterPanel,
    scenario: ScenarioConfig,
    base: RunConfig = RunConfig(),
    jobs: int = 1,
    noise_seed: int = 0,
    lambdas: Sequence[float] = LAMBDA_GRID,
    months: Sequence[int] = MONTH_GRID,
    noise_cases: Mapping[int, NoiseSpec] = NOISE_CASES,
) -> dict:
    """Candidate-count, lambda, window-length and noise sweeps.

    Returns plain tables: lists of row dicts keyed by the swept parameter.
    """
    trained: dict = {}

    def case_row(case: str) -> dict:
        # runtime includes training this case's models from scratch
        cfg = replace(base, case=case)
        t = time.perf_counter()
        res = disaggregate(panel, scenario, cfg)
        elapsed = time.perf_counter() - t
        trained.update(res.models)
        row = {"case": case, "n_candidates": len(cfg.azimuths), **_summary_row(evaluate(panel, res)), "runtime_s": elapsed}
        return row

    tables = {"candidates": [case_row(c) for c in ("I", "II", "III")]}
    # models depend only on geometry and azimuth, so the case runs already hold them
    models = {az: trained[az] for az in base.azimuths if az != 180.0}

    def lam_row(lam: float) -> dict:
        res = disaggregate(panel, scenario, replace(base, lam=lam), models)
        return {"lambda": lam, **_summary_row(evaluate(panel, res))}

    def month_row(k: int) -> dict:
        res = disaggregate(panel, scenario, replace(base, window_hours=k * DEFAULT_WINDOW_HOURS), models)
        return {"months": k, **_summary_row(evaluate(panel, res))}

    def noise_row(item) -> dict:
        label, spec = item
        noisy = panel if spec is None else apply_noise(panel, replace(spec, seed=noise_seed))
        res = disaggregate(noisy, scenario, base, models)
        return {"case": label, **_summary_row(evaluate(noisy, res))}

    tables["lambda"] = _map(lam_row, list(lambdas), jobs)
    tables["window"] = _map(month_row, list(months), jobs)
    noise_items = [("none", None)] + [(str(k), v) for k, v in sorted(noise_cases.items())]
    tables["noise"] = _map(noise_row, noise_items, jobs)
    base_res = disaggregate(panel, scenario, base, models)
    tables["cdf"] = evaluate(panel, base_res).cdf_table()
    return tables
