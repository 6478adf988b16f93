import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safepursuit.cbf import ConstraintRow, RowKind
from safepursuit.qp import QpStatus, brute_force_oracle, closed_form_single, solve, verify_kkt


def row(a, b, kind=RowKind.COLLISION):
    return ConstraintRow(np.asarray(a, dtype=float), float(b), kind)


def random_instance(rng, m=None):
    m = int(rng.integers(1, 7)) if m is None else m
    pi = rng.normal(scale=2.0, size=3)
    rows = [row(rng.normal(size=3), rng.normal()) for _ in range(m)]
    return pi, rows


# worked examples


def test_no_rows_returns_pi():
    pi = np.array([1.0, -2.0, 0.5])
    sol = solve(pi, [])
    assert np.array_equal(sol.v_star, pi)
    assert sol.multipliers.size == 0
    assert sol.status is QpStatus.OPTIMAL


def test_projection_onto_one_half_space():
    sol = solve(np.zeros(3), [row([1, 0, 0], 1)])
    assert np.allclose(sol.v_star, [1, 0, 0], atol=1e-15)
    assert sol.multipliers[0] == pytest.approx(1.0)
    assert sol.active_set == (0,)
    rep = verify_kkt(sol.v_star, sol.multipliers, np.zeros(3), [row([1, 0, 0], 1)])
    assert rep.stationarity == pytest.approx(0.0, abs=1e-15)
    assert rep.complementarity == pytest.approx(0.0, abs=1e-15)


def test_closed_form_examples():
    pi = np.array([3.0, 1.0, 0.0])
    assert np.array_equal(closed_form_single(pi, row([1, 0, 0], 1)), pi)
    assert np.allclose(closed_form_single(np.zeros(3), row([1, 1, 0], 2)), [1, 1, 0])
    with pytest.raises(ValueError):
        closed_form_single(pi, row([0, 0, 0], 1))


def test_unconstrained_kkt_is_clean():
    pi = np.array([0.3, 0.2, 0.1])
    rows = [row([1, 0, 0], -1), row([0, 1, 0], -1)]
    sol = solve(pi, rows)
    assert np.array_equal(sol.v_star, pi)
    rep = verify_kkt(sol.v_star, sol.multipliers, pi, rows)
    assert (rep.stationarity, rep.complementarity, rep.min_dual, rep.primal_violation) == (0.0, 0.0, 0.0, 0.0)


# against the brute-force oracle


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(12345)
    feasible = 0
    for _ in range(100):
        pi, rows = random_instance(rng)
        sol = solve(pi, rows)
        ref = brute_force_oracle(pi, rows)
        if ref is None:
            assert sol.status is QpStatus.INFEASIBLE
            continue
        feasible += 1
        assert sol.status is QpStatus.OPTIMAL
        assert np.linalg.norm(sol.v_star - ref) <= 1e-6
        assert sol.kkt.ok(1e-8)
    assert feasible >= 80


def test_single_rows_match_closed_form():
    rng = np.random.default_rng(99)
    for _ in range(200):
        pi, rows = random_instance(rng, 1)
        assert np.allclose(solve(pi, rows).v_star, closed_form_single(pi, rows[0]), rtol=0, atol=1e-10)


def test_brute_force_agrees_with_closed_form_within_grid():
    rng = np.random.default_rng(5)
    for _ in range(50):
        pi, rows = random_instance(rng, 1)
        ref = brute_force_oracle(pi, rows)
        # grid spacing is 2 * 5 / 40
        assert np.linalg.norm(ref - closed_form_single(pi, rows[0])) <= 0.25


def test_brute_force_edge_cases():
    pi = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(brute_force_oracle(pi, []), pi)
    a = np.array([0.0, 1.0, 0.0])
    assert brute_force_oracle(pi, [row(a, 1), row(-a, 1)]) is None
    with pytest.raises(ValueError):
        brute_force_oracle(pi, [row(a, 1)], grid_n=401)


# infeasible and degenerate inputs


def test_antiparallel_rows_are_infeasible_with_certificate():
    a = np.array([0.0, 1.0, 0.0])
    rows = [row(a, 1), row(-a, 1)]
    sol = solve(np.zeros(3), rows)
    assert sol.status is QpStatus.INFEASIBLE
    y = sol.certificate
    A = np.stack([r.a for r in rows])
    b = np.array([r.b for r in rows])
    assert np.all(y >= 0)
    assert np.allclose(A.T @ y, 0, atol=1e-12)
    assert b @ y > 0


def test_certificates_on_random_infeasible_sets():
    rng = np.random.default_rng(8)
    seen = 0
    for _ in range(300):
        pi, rows = random_instance(rng, 6)
        sol = solve(pi, rows)
        if sol.status is not QpStatus.INFEASIBLE:
            continue
        seen += 1
        y = sol.certificate
        A = np.stack([r.a for r in rows])
        b = np.array([r.b for r in rows])
        assert np.all(y >= -1e-12)
        assert np.linalg.norm(A.T @ y) <= 1e-9 * np.abs(y).sum()
        assert b @ y > 0
        assert brute_force_oracle(pi, rows) is None
    assert seen > 0


def test_zero_row_is_dropped_or_infeasible():
    pi = np.array([1.0, 0, 0])
    sol = solve(pi, [row([0, 0, 0], -1.0), row([1, 0, 0], 2.0)])
    assert sol.status is QpStatus.OPTIMAL
    assert np.allclose(sol.v_star, [2, 0, 0])
    assert solve(pi, [row([0, 0, 0], 1.0)]).status is QpStatus.INFEASIBLE


def test_iteration_cap_reports_degenerate():
    rng = np.random.default_rng(0)
    pi = np.zeros(3)
    rows = [row(rng.normal(size=3), 1.0 + rng.random()) for _ in range(5)]
    assert solve(pi, rows, max_iter=1).status in (QpStatus.DEGENERATE, QpStatus.OPTIMAL)


# invariants


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_row_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    pi, rows = random_instance(rng)
    sol = solve(pi, rows)
    if sol.status is not QpStatus.OPTIMAL:
        return
    perm = rng.permutation(len(rows))
    other = solve(pi, [rows[j] for j in perm])
    assert other.status is QpStatus.OPTIMAL
    assert np.allclose(other.v_star, sol.v_star, rtol=0, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_positive_row_scaling_does_not_matter(seed, s):
    rng = np.random.default_rng(seed)
    pi, rows = random_instance(rng)
    sol = solve(pi, rows)
    if sol.status is not QpStatus.OPTIMAL:
        return
    k = int(rng.integers(len(rows)))
    scaled = list(rows)
    scaled[k] = rows[k].scaled(s)
    assert np.allclose(solve(pi, scaled).v_star, sol.v_star, rtol=0, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasible_pi_is_returned_unchanged(seed):
    rng = np.random.default_rng(seed)
    pi, rows = random_instance(rng)
    # shift every offset so pi satisfies each row
    rows = [row(r.a, min(r.b, r.a @ pi)) for r in rows]
    assert np.array_equal(solve(pi, rows).v_star, pi)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kkt_conditions_hold(seed):
    rng = np.random.default_rng(seed)
    pi, rows = random_instance(rng)
    sol = solve(pi, rows)
    if sol.status is not QpStatus.OPTIMAL:
        return
    A = np.stack([r.a for r in rows])
    b = np.array([r.b for r in rows])
    lam, v = sol.multipliers, sol.v_star
    assert np.all(lam >= -1e-10)
    assert np.linalg.norm((v - pi) - A.T @ lam) <= 1e-8
    assert np.max(np.abs(lam * (A @ v - b))) <= 1e-8
    assert np.min(A @ v - b) >= -1e-8
