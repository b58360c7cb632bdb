"""Primal active-set solver for small inequality-constrained least squares.

Solves ``min ||E z - f||^2  s.t.  A z <= b`` from a feasible start. The
number of unknowns is tiny (a handful) while the number of rows of ``A`` may
be in the thousands, so every subproblem is solved in the reduced ``n``-space
through a QR factorization of ``E``. A singular ``E`` is handled with
minimum-norm least-squares steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space


class ActiveSetError(RuntimeError):
    """Iteration limit reached; carries the best feasible iterate found."""

    def __init__(self, message: str, z: np.ndarray, iterations: int):
        super().__init__(message)
        self.z = z
        self.iterations = iterations


@dataclass
class LsqResult:
    z: np.ndarray
    multipliers: np.ndarray  # one per row of A, nonnegative
    active: list
    iterations: int
    objective: float


def _objective(R, c, const, z):
    r = R @ z - c
    return float(r @ r + const)


def solve_lsi(
    E: np.ndarray,
    f: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    z0: np.ndarray,
    max_iter: int | None = None,
    tol: float = 1e-11,
) -> LsqResult:
    E = np.asarray(E, dtype=float)
    f = np.asarray(f, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = E.shape[1]
    m = A.shape[0]
    Q, R = np.linalg.qr(E, mode="reduced")
    c = Q.T @ f
    const = float(f @ f - c @ c)
    scale_b = 1.0 + float(np.max(np.abs(b))) if m else 1.0
    feas_tol = tol * scale_b
    z = np.array(z0, dtype=float)
    if m and np.max(A @ z - b) > 1e3 * feas_tol:
        raise ValueError("starting point is infeasible")
    row_norm = np.linalg.norm(A, axis=1) if m else np.zeros(0)
    max_iter = max_iter or 50 * (m + n) + 100
    W: list[int] = []
    grad_scale = 1.0 + float(np.linalg.norm(R.T @ c))
    for it in range(1, max_iter + 1):
        # minimize over the affine set {z + p : A_W p = 0}
        if W:
            Z = null_space(A[W])
        else:
            Z = np.eye(n)
        if Z.shape[1]:
            y, *_ = np.linalg.lstsq(R @ Z, c - R @ z, rcond=None)
            p = Z @ y
        else:
            p = np.zeros(n)
        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(z)):
            grad = 2.0 * R.T @ (R @ z - c)
            if not W:
                mult_w = np.zeros(0)
            else:
                mult_w, *_ = np.linalg.lstsq(A[W].T, -grad, rcond=None)
            if mult_w.size == 0 or mult_w.min() >= -tol * grad_scale:
                mult = np.zeros(m)
                if W:
                    mult[W] = np.maximum(mult_w, 0.0)
                return LsqResult(z, mult, list(W), it, _objective(R, c, const, z))
            W.pop(int(np.argmin(mult_w)))
            continue
        Ap = A @ p if m else np.zeros(0)
        alpha = 1.0
        block = -1
        cand = np.flatnonzero(Ap > 1e-14 * (1.0 + row_norm * np.linalg.norm(p)))
        cand = np.setdiff1d(cand, W, assume_unique=False)
        if cand.size:
            slack = np.maximum(b[cand] - A[cand] @ z, 0.0)
            ratios = slack / Ap[cand]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha = float(ratios[k])
                block = int(cand[k])
        z = z + alpha * p
        if block >= 0:
            W.append(block)
    raise ActiveSetError(f"active-set iteration limit {max_iter} reached", z, max_iter)
