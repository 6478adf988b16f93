"""Switching between the nominal action and the QP safety filter.

A nominal action that satisfies every row (region R1) is applied unchanged;
otherwise (R2) it is replaced by the closest action satisfying all rows.  If
the rows have no common solution the input rows are softened first, then the
sensing row; collision rows are never softened.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cbf import ConstraintRow, RowKind
from .qp import QpSolution, QpStatus, InfeasibleError, solve, verify_kkt

SLACK_WEIGHT = 1e6


class Region(enum.Enum):
    R1 = 1
    R2 = 2


@dataclass(frozen=True)
class SwitchDecision:
    region: Region
    margins: np.ndarray
    filtered: bool
    relaxed: tuple[RowKind, ...] = ()


def margins(pi, rows: Sequence[ConstraintRow]) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return np.array([r.a @ pi - r.b for r in rows], dtype=float)


def classify(pi, rows: Sequence[ConstraintRow]) -> SwitchDecision:
    m = margins(pi, rows)
    region = Region.R1 if np.all(m >= 0) else Region.R2
    return SwitchDecision(region, m, region is Region.R2)


def _relaxed_solve(pi, rows: Sequence[ConstraintRow], soft: tuple[RowKind, ...]) -> QpSolution:
    """QP with one non-negative slack per soft row, penalised by ``SLACK_WEIGHT``.

    The slack is carried in the scaled variable ``s = sqrt(w) sigma`` so the
    Hessian stays the identity; the returned solution is restricted to ``v``.
    """
    n = len(pi)
    soft_idx = [j for j, r in enumerate(rows) if r.kind in soft]
    k = len(soft_idx)
    inv = 1.0 / np.sqrt(SLACK_WEIGHT)
    A = np.zeros((len(rows) + k, n + k))
    b = np.zeros(len(rows) + k)
    for j, r in enumerate(rows):
        A[j, :n] = r.a
        b[j] = r.b
    for col, j in enumerate(soft_idx):
        A[j, n + col] = inv
        A[len(rows) + col, n + col] = 1.0
    target = np.concatenate([np.asarray(pi, dtype=float), np.zeros(k)])
    sol = solve(target, (A, b))
    if sol.status is not QpStatus.OPTIMAL:
        return sol
    return QpSolution(
        v_star=sol.v_star[:n],
        multipliers=sol.multipliers[: len(rows)],
        active_set=tuple(j for j in sol.active_set if j < len(rows)),
        kkt=verify_kkt(sol.v_star, sol.multipliers, target, (A, b)),
        status=sol.status,
        iterations=sol.iterations,
    )


def hybrid_control(pi, rows: Sequence[ConstraintRow]):
    """Return ``(v, decision, solution)``; ``solution`` is ``None`` in R1."""
    pi = np.asarray(pi, dtype=float)
    decision = classify(pi, rows)
    if decision.region is Region.R1:
        return pi, decision, None
    sol = solve(pi, rows)
    relaxed: tuple[RowKind, ...] = ()
    for soft in ((RowKind.INPUT,), (RowKind.INPUT, RowKind.SENSING)):
        if sol.status is QpStatus.OPTIMAL:
            break
        relaxed = soft
        sol = _relaxed_solve(pi, rows, soft)
    if sol.status is not QpStatus.OPTIMAL:
        raise InfeasibleError(
            f"safety QP {sol.status.value} with collision rows alone", sol.certificate
        )
    if relaxed:
        decision = SwitchDecision(decision.region, decision.margins, True, relaxed)
    return sol.v_star, decision, sol
