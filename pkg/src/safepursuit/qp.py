"""Projection QP ``min 0.5 |v - pi|**2  s.t.  a_j @ v >= b_j``.

The solver is a dual active-set method in the style of Goldfarb and Idnani,
specialised to an identity Hessian: it starts from the unconstrained
minimiser ``pi`` and adds violated constraints one at a time (lowest index
first), dropping constraints whose multiplier would turn negative.  An empty
feasible set is reported together with a Farkas certificate ``y >= 0`` with
``A.T @ y = 0`` and ``b @ y > 0``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cbf import ConstraintRow

DEGENERATE_NORM = 1e-9
KKT_TOL = 1e-8


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    complementarity: float
    min_dual: float
    primal_violation: float

    def ok(self, tol: float = KKT_TOL) -> bool:
        return (
            self.stationarity <= tol
            and self.complementarity <= tol
            and self.min_dual >= -1e-10
            and self.primal_violation <= tol
        )


@dataclass(frozen=True)
class QpSolution:
    v_star: np.ndarray
    multipliers: np.ndarray
    active_set: tuple[int, ...]
    kkt: Optional[KktReport]
    status: QpStatus
    certificate: Optional[np.ndarray] = None
    iterations: int = 0


class InfeasibleError(RuntimeError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


def _as_arrays(rows):
    """Accept ConstraintRows or an ``(A, b)`` pair."""
    if isinstance(rows, tuple) and len(rows) == 2 and isinstance(rows[0], np.ndarray):
        A, b = rows
        return np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float))
    rows = list(rows)
    if not rows:
        return None, None
    return np.stack([r.a for r in rows]).astype(float), np.array([r.b for r in rows], dtype=float)


def verify_kkt(sol_v, multipliers, pi, rows) -> KktReport:
    """Recompute the KKT residuals of ``(v, lambda)`` from scratch."""
    v = np.asarray(sol_v, dtype=float)
    pi = np.asarray(pi, dtype=float)
    A, b = _as_arrays(rows)
    if A is None:
        return KktReport(float(np.linalg.norm(v - pi)), 0.0, 0.0, 0.0)
    lam = np.asarray(multipliers, dtype=float)
    slack = A @ v - b
    return KktReport(
        stationarity=float(np.linalg.norm((v - pi) - A.T @ lam)),
        complementarity=float(np.max(np.abs(lam * slack))),
        min_dual=float(np.min(lam)),
        primal_violation=float(max(0.0, np.max(-slack))),
    )


def solve(pi, rows, max_iter: Optional[int] = None) -> QpSolution:
    pi = np.asarray(pi, dtype=float)
    A_raw, b_raw = _as_arrays(rows)
    n = pi.shape[0]
    if A_raw is None:
        return QpSolution(pi.copy(), np.zeros(0), (), verify_kkt(pi, [], pi, []), QpStatus.OPTIMAL)
    m = A_raw.shape[0]
    norms = np.linalg.norm(A_raw, axis=1)
    keep = norms >= DEGENERATE_NORM
    for j in np.flatnonzero(~keep):
        if b_raw[j] > 0:
            cert = np.zeros(m)
            cert[j] = 1.0
            return QpSolution(pi.copy(), np.zeros(m), (), None, QpStatus.INFEASIBLE, cert)
    idx = np.flatnonzero(keep)
    A = A_raw[idx] / norms[idx, None]
    b = b_raw[idx] / norms[idx]
    v, lam, active, status, cert, it = _dual_active_set(pi, A, b, max_iter or 2 ** min(len(idx) + 4, 30))
    full_lam = np.zeros(m)
    full_lam[idx] = lam / norms[idx]
    active_rows = tuple(int(idx[j]) for j in active)
    if status is QpStatus.INFEASIBLE:
        full_cert = np.zeros(m)
        full_cert[idx] = cert / norms[idx]
        return QpSolution(v, full_lam, active_rows, None, status, full_cert, it)
    kkt = verify_kkt(v, full_lam, pi, (A_raw, b_raw)) if status is QpStatus.OPTIMAL else None
    if kkt is not None and not kkt.ok():
        v, lam = _polish(pi, A, b, v, lam, active)
        full_lam[idx] = lam / norms[idx]
        kkt = verify_kkt(v, full_lam, pi, (A_raw, b_raw))
        if not kkt.ok():
            # an answer that fails its own certificate is not reported as optimal
            status = QpStatus.DEGENERATE
    return QpSolution(v, full_lam, tuple(sorted(active_rows)), kkt, status, None, it)


def _dual_active_set(pi, A, b, max_iter):
    m, n = A.shape
    v = pi.copy()
    lam = np.zeros(m)
    active: list[int] = []
    scale = 1.0 + np.max(np.abs(b)) + np.linalg.norm(pi)
    tol = 1e-13 * scale
    it = 0
    while True:
        slack = A @ v - b
        viol = np.flatnonzero(slack < -tol)
        viol = [j for j in viol if j not in active]
        if not viol:
            return v, lam, active, QpStatus.OPTIMAL, None, it
        p = int(viol[0])  # Bland: lowest index first
        while True:
            it += 1
            if it > max_iter:
                return v, lam, active, QpStatus.DEGENERATE, None, it
            if active:
                N = A[active].T
                gram = N.T @ N
                if np.linalg.cond(gram) > 1e12:
                    return v, lam, active, QpStatus.DEGENERATE, None, it
                r = np.linalg.solve(gram, N.T @ A[p])
                z = A[p] - N @ r
            else:
                r = np.zeros(0)
                z = A[p].copy()
            zz = z @ z
            # rows are unit length, so a full active set or a tiny z means p
            # lies in their span and only the multipliers can move
            if len(active) >= n or zz <= 1e-20:
                t2 = np.inf
            else:
                t2 = (b[p] - A[p] @ v) / zz
            t1, block = np.inf, None
            for pos, j in enumerate(active):
                if r[pos] > 1e-14:
                    ratio = lam[j] / r[pos]
                    if ratio < t1:
                        t1, block = ratio, pos
            if not np.isfinite(t1) and not np.isfinite(t2):
                cert = np.zeros(m)
                cert[p] = 1.0
                for pos, j in enumerate(active):
                    cert[j] = -r[pos]
                return v, lam, active, QpStatus.INFEASIBLE, cert, it
            t = min(t1, t2)
            if np.isfinite(t2):
                v = v + t * z
            for pos, j in enumerate(active):
                lam[j] -= t * r[pos]
            lam[p] += t
            if t2 <= t1:
                active.append(p)
                break
            lam[active[block]] = 0.0
            del active[block]


def _polish(pi, A, b, v, lam, active):
    # re-solve the projection onto the final active set in one shot; the
    # accumulated steps drift when that set is badly conditioned
    if not active:
        return v, lam
    N = A[active].T
    gram = N.T @ N
    lam_a = np.linalg.solve(gram, b[active] - N.T @ pi)
    if np.any(lam_a < 0):
        return v, lam
    v_new = pi + N @ lam_a
    for _ in range(2):
        res = b[active] - N.T @ v_new
        if np.max(np.abs(res)) <= 1e-15 * (1.0 + np.abs(v_new).max()):
            break
        fix = np.linalg.solve(gram, res)
        v_new = v_new + N @ fix
        lam_a = lam_a + fix
    if np.min(A @ v_new - b) < np.min(A @ v - b) - 1e-12:
        return v, lam
    lam = lam.copy()
    lam[active] = lam_a
    return v_new, lam


def closed_form_single(pi, row: ConstraintRow) -> np.ndarray:
    """Half-space projection ``pi + max(0, (b - a.pi)/|a|**2) a``."""
    pi = np.asarray(pi, dtype=float)
    a = np.asarray(row.a, dtype=float)
    aa = a @ a
    if np.sqrt(aa) < DEGENERATE_NORM:
        raise ValueError("closed form needs a non-degenerate row")
    return pi + max(0.0, (row.b - a @ pi) / aa) * a


def brute_force_oracle(pi, rows, radius: float = 5.0, grid_n: int = 41) -> Optional[np.ndarray]:
    """Exhaustive reference solution, independent of :func:`solve`.

    A grid over ``pi +- radius`` locates the feasible region; the answer is
    then refined by enumerating every subset of at most ``n`` rows, projecting
    ``pi`` onto the affine set where those rows are tight and keeping the
    closest feasible candidate.  Returns ``None`` when nothing feasible is
    found.
    """
    pi = np.asarray(pi, dtype=float)
    n = pi.shape[0]
    if grid_n > 201:
        raise ValueError("grid_n is limited to 201")
    A, b = _as_arrays(rows)
    if A is None:
        return pi.copy()
    tol = 1e-9 * (1.0 + np.max(np.abs(b)))
    axes = [np.linspace(c - radius, c + radius, grid_n) for c in pi]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    feasible = np.all(grid @ A.T - b >= -tol, axis=1)
    best, best_d = None, np.inf
    if np.any(feasible):
        cand = grid[feasible]
        d = np.sum((cand - pi) ** 2, axis=1)
        best = cand[np.argmin(d)]
        best_d = float(np.min(d))
    for size in range(0, min(n, A.shape[0]) + 1):
        for subset in itertools.combinations(range(A.shape[0]), size):
            if size == 0:
                x = pi
            else:
                As, bs = A[list(subset)], b[list(subset)]
                if np.linalg.matrix_rank(As) < size:
                    continue
                x = pi - As.T @ np.linalg.solve(As @ As.T, As @ pi - bs)
            if np.all(A @ x - b >= -tol):
                d = float(np.sum((x - pi) ** 2))
                if d < best_d:
                    best, best_d = x, d
    return None if best is None else np.array(best)
