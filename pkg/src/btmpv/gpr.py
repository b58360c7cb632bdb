"""Gaussian-process mapping from a south-facing curve to non-south candidate curves.

Inputs per hour are ``(normalized south output, hour-of-day, day-of-year)``;
hour and day are rescaled to ``[0, 1]`` so one squared-exponential length
scale applies to all three. Targets are centered on their sample mean before
conditioning and the mean is added back to predictions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .series import DayNightMask, HourlySeries, normalize_to_peak

log = logging.getLogger(__name__)

SIGMA_F_GRID = (0.5, 1.0, 2.0)
LENGTH_GRID = (0.1, 0.3, 1.0)
JITTER = 1e-6
MAX_JITTER = 1e-2
MAX_TRAIN = 2000
CV_FOLDS = 5
_CHUNK = 2048

AZIMUTH_CASES = {
    "I": (180.0,),
    "II": (90.0, 180.0, 270.0),
    "III": (90.0, 135.0, 180.0, 225.0, 270.0),
}


def features(g_s: np.ndarray, hour: np.ndarray, doy: np.ndarray) -> np.ndarray:
    """Standardized ``(n, 3)`` input matrix."""
    g_s = np.clip(np.asarray(g_s, dtype=float), 0.0, 1.0)
    return np.column_stack(
        [g_s, np.asarray(hour, dtype=float) / 23.0, (np.asarray(doy, dtype=float) - 1.0) / 365.0]
    )


def kernel(x, x2, sigma_f: float, sigma: float) -> float:
    """Squared-exponential covariance of two input vectors."""
    if sigma_f <= 0 or sigma <= 0:
        raise ValueError("kernel hyperparameters must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return float(sigma_f**2 * np.exp(-np.dot(d, d) / (2.0 * sigma**2)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, sigma_f: float, sigma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    if A is B:
        np.fill_diagonal(sq, 0.0)
    return sigma_f**2 * np.exp(-sq / (2.0 * sigma**2))


class GprFitError(RuntimeError):
    pass


def _factor(X: np.ndarray, sigma_f: float, sigma: float, jitter: float, max_jitter: float = MAX_JITTER):
    K = kernel_matrix(X, X, sigma_f, sigma)
    j = jitter
    while True:
        try:
            return cho_factor(K + j * np.eye(len(X)), lower=True, check_finite=False), j
        except LinAlgError:
            if j * 10 > max_jitter * (1 + 1e-9):
                raise GprFitError(f"covariance not positive definite even with jitter {j:g}")
            j *= 10
            log.debug("escalating jitter to %g", j)


@dataclass(frozen=True)
class GprModel:
    X: np.ndarray
    y: np.ndarray
    sigma_f: float
    sigma: float
    jitter: float
    azimuth: float
    y_mean: float
    chol: tuple
    alpha: np.ndarray

    @classmethod
    def fit(cls, X, y, sigma_f: float, sigma: float, azimuth: float = float("nan"), jitter: float = JITTER) -> "GprModel":
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float)
        if sigma_f <= 0 or sigma <= 0:
            raise ValueError("kernel hyperparameters must be positive")
        chol, used = _factor(X, sigma_f, sigma, jitter, max(MAX_JITTER, jitter))
        y_mean = float(y.mean())
        alpha = cho_solve(chol, y - y_mean, check_finite=False)
        for arr in (X, y, alpha):
            arr.setflags(write=False)
        return cls(X, y, float(sigma_f), float(sigma), used, float(azimuth), y_mean, chol, alpha)

    def predict(self, Xq: np.ndarray, return_var: bool = False):
        """Posterior mean (and variance) at standardized query inputs."""
        Xq = np.asarray(Xq, dtype=float)
        mean = np.empty(len(Xq))
        var = np.empty(len(Xq)) if return_var else None
        L = np.tril(self.chol[0])
        for lo in range(0, len(Xq), _CHUNK):
            Ks = kernel_matrix(Xq[lo : lo + _CHUNK], self.X, self.sigma_f, self.sigma)
            mean[lo : lo + _CHUNK] = self.y_mean + Ks @ self.alpha
            if return_var:
                v = solve_triangular(L, Ks.T, lower=True, check_finite=False)
                var[lo : lo + _CHUNK] = self.sigma_f**2 - (v * v).sum(0)
        return (mean, var) if return_var else mean

    def save(self, path) -> None:
        """Flat text dump of training data and hyperparameters; ``load`` refits exactly."""
        header = "sigma_f={!r} sigma={!r} jitter={!r} azimuth={!r}".format(
            self.sigma_f, self.sigma, self.jitter, self.azimuth
        )
        np.savetxt(path, np.column_stack([self.X, self.y]), fmt="%.17g", delimiter=",", header=header)

    @classmethod
    def load(cls, path) -> "GprModel":
        with open(path) as fh:
            header = fh.readline().lstrip("#").split()
        hyper = {k: float(v) for k, v in (item.split("=") for item in header)}
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls.fit(data[:, :-1], data[:, -1], hyper["sigma_f"], hyper["sigma"], hyper["azimuth"], hyper["jitter"])


def subsample(n_rows: int, limit: int = MAX_TRAIN) -> np.ndarray:
    stride = max(1, -(-n_rows // limit))
    return np.arange(0, n_rows, stride)


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    sigma_f_grid: Sequence[float] = SIGMA_F_GRID,
    length_grid: Sequence[float] = LENGTH_GRID,
    folds: int = CV_FOLDS,
) -> tuple[float, float, dict]:
    """Grid search on held-out RMSE with interleaved folds; ties go to the earlier grid point."""
    fold_of = np.arange(len(X)) % folds
    scores = {}
    for sf in sigma_f_grid:
        for ls in length_grid:
            sq = 0.0
            for k in range(folds):
                tr, te = fold_of != k, fold_of == k
                m = GprModel.fit(X[tr], y[tr], sf, ls)
                sq += float(((m.predict(X[te]) - y[te]) ** 2).sum())
            scores[(sf, ls)] = np.sqrt(sq / len(X))
    best = min(scores, key=scores.get)
    return best[0], best[1], scores


def train_gpr(
    surrogate_south: HourlySeries,
    surrogate_ns: HourlySeries,
    azimuth: float = float("nan"),
    max_points: int = MAX_TRAIN,
    sigma_f_grid: Sequence[float] = SIGMA_F_GRID,
    length_grid: Sequence[float] = LENGTH_GRID,
    mask: DayNightMask | None = None,
) -> GprModel:
    """Fit one azimuth's mapping on the diurnal hours of two normalized surrogate curves.

    Hours outside the nocturnal set are kept even when both curves are zero so
    the model learns that dark input maps to dark output at dawn and dusk.
    """
    mask = mask or DayNightMask()
    if surrogate_south.start != surrogate_ns.start or len(surrogate_south) != len(surrogate_ns):
        raise ValueError("surrogate curves are misaligned")
    gs, gns = surrogate_south.values, surrogate_ns.values
    if gs.max() > 1 + 1e-9 or gns.max() > 1 + 1e-9 or gs.min() < 0 or gns.min() < 0:
        raise ValueError("surrogate curves must be normalized to [0, 1]")
    day = mask.day_index(surrogate_south.start.hour, len(gs))
    rows = day[subsample(day.size, max_points)]
    X = features(gs[rows], surrogate_south.hours[rows], surrogate_south.days_of_year[rows])
    y = gns[rows]
    sf, ls, scores = cross_validate(X, y, sigma_f_grid, length_grid)
    log.info("azimuth %g: sigma_f=%g sigma=%g cv-rmse=%.4g (n=%d)", azimuth, sf, ls, scores[(sf, ls)], len(X))
    return GprModel.fit(X, y, sf, ls, azimuth)


def infer_candidate(
    model: GprModel,
    G_s: HourlySeries,
    mask: DayNightMask | None = None,
    return_var: bool = False,
):
    """Posterior-mean candidate curve, clipped to ``[0, 1]`` and zero at night."""
    mask = mask or DayNightMask()
    Xq = features(G_s.values, G_s.hours, G_s.days_of_year)
    mean, var = model.predict(Xq, return_var=True) if return_var else (model.predict(Xq), None)
    out = np.clip(mean, 0.0, 1.0)
    out[mask.is_night(G_s.hours)] = 0.0
    series = G_s.with_values(out)
    return (series, var) if return_var else series


@dataclass(frozen=True)
class CandidateSet:
    """``(T, N_e)`` candidate matrix; column 0 is the south (aggregate-shape) curve."""

    G_e: np.ndarray
    azimuths: tuple
    start: object = None

    def __post_init__(self):
        G = np.array(self.G_e, dtype=float)
        if G.ndim != 2 or G.shape[1] != len(self.azimuths):
            raise ValueError("candidate matrix columns must match azimuth labels")
        G.setflags(write=False)
        object.__setattr__(self, "G_e", G)
        object.__setattr__(self, "azimuths", tuple(float(a) for a in self.azimuths))

    @property
    def n_candidates(self) -> int:
        return self.G_e.shape[1]

    def rows(self, start: int, stop: int) -> np.ndarray:
        return self.G_e[start:stop]


def build_candidate_set(
    G_w_hat: HourlySeries,
    azimuths: Sequence[float],
    models: Mapping[float, GprModel],
    mask: DayNightMask | None = None,
) -> CandidateSet:
    """Normalize the aggregate generation estimate and infer one column per non-south azimuth."""
    mask = mask or DayNightMask()
    G_s, _ = normalize_to_peak(G_w_hat)
    south = np.clip(G_s.values, 0.0, 1.0)
    south[mask.is_night(G_s.hours)] = 0.0
    ordered = [180.0] + sorted(float(a) for a in azimuths if float(a) != 180.0)
    cols = [south]
    for az in ordered[1:]:
        if az not in models:
            raise KeyError(f"no trained model for azimuth {az:g}")
        cols.append(infer_candidate(models[az], G_s, mask).values)
    return CandidateSet(np.column_stack(cols), tuple(ordered), G_w_hat.start)
