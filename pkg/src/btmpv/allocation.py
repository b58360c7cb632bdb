"""Customer layer: per-PV peak estimates and allocation of aggregate generation.

Allocation problem for one window (``G`` the ``T x N_e`` candidate matrix,
``g`` the aggregate generation estimate, ``m`` per-customer peak estimates)::

    min_{K, gamma}  ||G K 1 - g||^2 + lam ||gamma||^2
    s.t.            G K_i <= (m_i + gamma_i) 1      for every customer i
                    0 <= gamma <= P0,   K >= 0 (optional)

The objective sees ``K`` only through ``s = K 1`` and ``gamma`` only through
its squared norm, and the sum of scaled copies of the convex set
``{k : G k <= 1}`` is the same set scaled by the summed factors. The problem is
therefore solved exactly in ``(s, Gamma = sum(gamma))`` with the slack split
evenly, then lifted back with ``K_i = (m_i + gamma_i) / sum_j (m_j + gamma_j) * s``.
Among the (generally many) optimal ``K`` this picks the one that shares
every candidate in proportion to each customer's corrected peak.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregate import AggregateEstimate
from .gpr import CandidateSet
from .lsq import ActiveSetError, solve_lsi
from .series import DayNightMask, DegenerateSeriesError, HourlySeries, MeterPanel, Window

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 100.0
DEFAULT_P0 = 2.0
KKT_TOL = 1e-6


@dataclass(frozen=True)
class PeakEstimate:
    customer_id: str
    P_min_night: float
    P_min_day_net: float
    D_w: float
    G_peak_hat: float


def _window_night(start_hour: int, window: Window, mask: DayNightMask) -> np.ndarray:
    return mask.is_night((start_hour + window.start + np.arange(window.length)) % 24)


def estimate_peaks(net: np.ndarray, night: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise ``(nocturnal minimum, diurnal minimum)`` of a ``(T, N)`` net-demand block."""
    if night.all() or not night.any():
        raise DegenerateSeriesError("window lacks either night or day hours")
    return net[night].min(axis=0), net[~night].min(axis=0)


def estimate_peak(
    net: HourlySeries,
    mask: DayNightMask | None = None,
    window: Window | None = None,
    customer_id: str = "",
) -> PeakEstimate:
    """Peak generation from the gap between nocturnal and diurnal net-demand minima."""
    mask = mask or DayNightMask()
    window = window or Window(0, len(net))
    window.check_within(len(net))
    block = net.values[window.start : window.stop, None]
    lo_n, lo_d = estimate_peaks(block, _window_night(net.start.hour, window, mask))
    d = float(lo_n[0] - lo_d[0])
    return PeakEstimate(customer_id, float(lo_n[0]), float(lo_d[0]), d, max(d, 0.0))


@dataclass(frozen=True)
class QpProblem:
    G_e: np.ndarray
    G_w_hat: np.ndarray
    peaks: np.ndarray
    lam: float = DEFAULT_LAMBDA
    P0: float = DEFAULT_P0
    nonneg_weights: bool = True

    def __post_init__(self):
        G = np.atleast_2d(np.array(self.G_e, dtype=float))
        g = np.array(self.G_w_hat, dtype=float).ravel()
        m = np.array(self.peaks, dtype=float).ravel()
        if G.shape[0] != g.size:
            raise ValueError(f"candidate rows {G.shape[0]} != target length {g.size}")
        if m.size < 1:
            raise ValueError("need at least one customer")
        if not self.lam > 0:
            raise ValueError("penalty weight must be positive")
        if self.P0 < 0:
            raise ValueError("slack bound must be nonnegative")
        if np.any(m < 0):
            raise ValueError("peak estimates must be nonnegative")
        for name, arr in (("G_e", G), ("G_w_hat", g), ("peaks", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_customers(self) -> int:
        return self.peaks.size

    @property
    def n_candidates(self) -> int:
        return self.G_e.shape[1]

    @property
    def scale(self) -> float:
        return 1.0 + float(np.linalg.norm(self.G_w_hat))

    def objective(self, K: np.ndarray, gamma: np.ndarray) -> float:
        r = self.G_e @ K.sum(axis=1) - self.G_w_hat
        return float(r @ r + self.lam * gamma @ gamma)

    def max_violation(self, K: np.ndarray, gamma: np.ndarray) -> float:
        """Largest constraint violation (0 when feasible)."""
        cap = self.peaks + gamma
        v = [float(np.max(self.G_e @ K - cap[None, :], initial=0.0))]
        v.append(float(max(0.0, -gamma.min(), (gamma - self.P0).max())))
        if self.nonneg_weights:
            v.append(float(max(0.0, -K.min())))
        return max(0.0, *v)


@dataclass
class AllocationSolution:
    K: np.ndarray
    gamma: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    G_hat: np.ndarray | None = None  # (T, N_w); filled by reconstruct_customers
    P_hat: np.ndarray | None = None
    multipliers: dict = field(default_factory=dict, repr=False)


class AllocationError(RuntimeError):
    def __init__(self, message: str, best: AllocationSolution | None = None, window_index: int | None = None):
        super().__init__(message)
        self.best = best
        self.window_index = window_index

    @property
    def residual(self) -> float:
        return float("nan") if self.best is None else self.best.kkt_residual


def _constraint_rows(G: np.ndarray, nonneg: bool) -> np.ndarray:
    """Indices of rows of ``G`` that can ever bind.

    All-zero rows never bind. With nonnegative weights a row dominated
    componentwise by another row is implied by it.
    """
    nz = np.flatnonzero(np.any(G != 0.0, axis=1))
    _, first = np.unique(G[nz], axis=0, return_index=True)
    rows = nz[np.sort(first)]
    if not nonneg or rows.size <= 1:
        return rows
    order = rows[np.argsort(-G[rows].sum(axis=1), kind="stable")]
    kept: list[int] = []
    for t in order:
        if kept and np.any(np.all(G[kept] >= G[t], axis=1)):
            continue
        kept.append(int(t))
    return np.sort(np.array(kept, dtype=int))


def _lift(problem: QpProblem, s: np.ndarray, Gamma: float) -> tuple[np.ndarray, np.ndarray]:
    n_w = problem.n_customers
    gamma = np.full(n_w, Gamma / n_w)
    cap = problem.peaks + gamma
    total = cap.sum()
    share = cap / total if total > 0 else np.full(n_w, 1.0 / n_w)
    return np.outer(s, share), gamma


def kkt_residual(problem: QpProblem, K: np.ndarray, gamma: np.ndarray, mult: dict) -> float:
    """Worst violation of stationarity, feasibility and complementarity of the full problem.

    ``mult`` holds reduced multipliers: ``row`` (length T, per candidate row
    shared by every customer), ``s`` (weight sign bounds), ``lo``/``hi``
    (slack bounds). They are valid for each customer block unchanged.
    """
    G, g, lam = problem.G_e, problem.G_w_hat, problem.lam
    mu = mult["row"]
    pi = mult.get("s", np.zeros(problem.n_candidates))
    r = G @ K.sum(axis=1) - g
    stat_K = 2.0 * G.T @ r + G.T @ mu - pi  # identical for every customer
    stat_g = 2.0 * lam * gamma - mu.sum() - mult["lo"] + mult["hi"]
    slack = (problem.peaks + gamma)[None, :] - G @ K
    parts = [
        np.max(np.abs(stat_K), initial=0.0),
        np.max(np.abs(stat_g), initial=0.0),
        problem.max_violation(K, gamma),
        np.max(np.abs(mu[:, None] * slack), initial=0.0),
        np.max(np.abs(mult["lo"] * gamma), initial=0.0),
        np.max(np.abs(mult["hi"] * (problem.P0 - gamma)), initial=0.0),
    ]
    if problem.nonneg_weights:
        parts.append(np.max(np.abs(pi[:, None] * K), initial=0.0))
    return float(max(parts))


def solve_allocation(
    problem: QpProblem,
    K0: np.ndarray | None = None,
    gamma0: np.ndarray | None = None,
    max_iter: int | None = None,
) -> AllocationSolution:
    """Globally optimal ``(K, gamma)`` with a KKT certificate on the full problem."""
    G, g = problem.G_e, problem.G_w_hat
    T, n_e = G.shape
    n_w = problem.n_customers
    M = float(problem.peaks.sum())
    rows = _constraint_rows(G, problem.nonneg_weights)

    E = np.zeros((T + 1, n_e + 1))
    E[:T, :n_e] = G
    E[T, n_e] = np.sqrt(problem.lam / n_w)
    f = np.concatenate([g, [0.0]])

    blocks_A = [np.hstack([G[rows], -np.ones((rows.size, 1))])]
    blocks_b = [np.full(rows.size, M)]
    if problem.nonneg_weights:
        blocks_A.append(np.hstack([-np.eye(n_e), np.zeros((n_e, 1))]))
        blocks_b.append(np.zeros(n_e))
    lo_row = np.zeros((1, n_e + 1))
    lo_row[0, n_e] = -1.0
    hi_row = -lo_row
    blocks_A += [lo_row, hi_row]
    blocks_b += [np.zeros(1), np.array([n_w * problem.P0])]
    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)

    z0 = np.zeros(n_e + 1)
    if K0 is not None:
        z0[:n_e] = np.asarray(K0, dtype=float).sum(axis=1)
        z0[n_e] = float(np.sum(gamma0)) if gamma0 is not None else 0.0

    try:
        res = solve_lsi(E, f, A, b, z0, max_iter=max_iter)
    except ActiveSetError as exc:
        K, gamma = _lift(problem, exc.z[:n_e], float(exc.z[n_e]))
        best = AllocationSolution(K, gamma, problem.objective(K, gamma), float("inf"), exc.iterations)
        raise AllocationError(str(exc), best) from exc

    s, Gamma = res.z[:n_e], float(np.clip(res.z[n_e], 0.0, n_w * problem.P0))
    K, gamma = _lift(problem, s, Gamma)
    mu = np.zeros(T)
    mu[rows] = res.multipliers[: rows.size]
    k = rows.size
    mult = {"row": mu}
    if problem.nonneg_weights:
        mult["s"] = res.multipliers[k : k + n_e]
        k += n_e
    mult["lo"], mult["hi"] = float(res.multipliers[k]), float(res.multipliers[k + 1])
    if problem.nonneg_weights:
        K = np.maximum(K, 0.0)
    residual = kkt_residual(problem, K, gamma, mult)
    sol = AllocationSolution(K, gamma, problem.objective(K, gamma), residual, res.iterations, multipliers=mult)
    if residual > KKT_TOL * problem.scale:
        raise AllocationError(f"KKT residual {residual:.3g} above tolerance", sol)
    return sol


def reconstruct_customers(solution: AllocationSolution, problem: QpProblem, net: np.ndarray):
    """Per-customer ``(G_hat, P_hat)`` blocks of shape ``(T, N_w)``."""
    net = np.asarray(net, dtype=float)
    G_hat = problem.G_e @ solution.K
    if G_hat.shape != net.shape:
        raise ValueError(f"net block shape {net.shape} does not match {G_hat.shape}")
    P_hat = net + G_hat
    solution.G_hat, solution.P_hat = G_hat, P_hat
    return G_hat, P_hat


@dataclass
class CustomerEstimates:
    G_hat: np.ndarray  # (T, N_w) full span
    P_hat: np.ndarray
    peaks: np.ndarray  # (n_windows, N_w)
    solutions: list
    windows: list


def run_customer_layer(
    panel: MeterPanel,
    aggregate_estimates: Sequence[AggregateEstimate],
    candidates: CandidateSet,
    lam: float = DEFAULT_LAMBDA,
    P0: float = DEFAULT_P0,
    mask: DayNightMask | None = None,
    nonneg_weights: bool = True,
) -> CustomerEstimates:
    """Solve every window independently and stitch the per-customer series."""
    mask = mask or DayNightMask()
    if candidates.G_e.shape[0] != panel.n_hours:
        raise ValueError("candidate set must span the whole panel")
    G_hat = np.zeros_like(panel.net)
    P_hat = np.zeros_like(panel.net)
    peaks, solutions, windows = [], [], []
    for k, est in enumerate(aggregate_estimates):
        w = est.window
        net = panel.net[w.start : w.stop]
        lo_n, lo_d = estimate_peaks(net, _window_night(panel.start_hour, w, mask))
        m = np.maximum(lo_n - lo_d, 0.0)
        problem = QpProblem(candidates.rows(w.start, w.stop), est.G_w_hat.values, m, lam, P0, nonneg_weights)
        try:
            sol = solve_allocation(problem)
        except AllocationError as exc:
            exc.window_index = k
            raise AllocationError(f"window {k}: {exc}", exc.best, k) from exc
        g_i, p_i = reconstruct_customers(sol, problem, net)
        G_hat[w.start : w.stop] = g_i
        P_hat[w.start : w.stop] = p_i
        peaks.append(m)
        solutions.append(sol)
        windows.append(w)
        log.debug("window %d: objective %.6g, kkt %.2e, %d iterations", k, sol.objective, sol.kkt_residual, sol.iterations)
    return CustomerEstimates(G_hat, P_hat, np.array(peaks), solutions, windows)
