from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safepursuit import sim
from safepursuit.dynamics import NO_DISTURBANCE, PursuerState, TargetState, integrate_step
from safepursuit.policy import Constant, NominalPolicy, PdTracker, Recorded, nominal_action, reward

Z3 = np.zeros(3)


def pursuer(x, u=Z3):
    return PursuerState(np.asarray(x, dtype=float), np.asarray(u, dtype=float))


def target(q, q_dot=Z3):
    return TargetState(np.asarray(q, dtype=float), np.asarray(q_dot, dtype=float), None)


# nominal actions


def test_zero_tracking_error_gives_zero_action():
    q, qd = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.0, -0.1])
    out = nominal_action(NominalPolicy(PdTracker()), pursuer(q, qd), target(q, qd))
    assert np.array_equal(out, Z3)


def test_proportional_term_alone():
    out = nominal_action(NominalPolicy(PdTracker(kp=1.0, kd=0.0)), pursuer(Z3), target([1.0, 0, 0]))
    assert np.array_equal(out, [1.0, 0.0, 0.0])


def test_standoff_moves_the_tracked_point():
    pol = NominalPolicy(PdTracker(kp=2.0, kd=0.0, standoff=(0.0, 0.5, 0.0)))
    out = nominal_action(pol, pursuer(Z3), target(Z3))
    assert np.array_equal(out, [0.0, 1.0, 0.0])


def test_constant_policy():
    out = nominal_action(NominalPolicy(Constant((1.0, 2.0, 3.0))), pursuer(Z3), target(Z3))
    assert np.array_equal(out, [1.0, 2.0, 3.0])


def test_recorded_returns_the_nearest_sample():
    rec = Recorded((0.0, 1.0, 2.0), ((0.0, 0, 0), (1.0, 0, 0), (2.0, 0, 0)))
    assert rec.at(-5.0)[0] == 0.0
    assert rec.at(0.4)[0] == 0.0
    assert rec.at(0.6)[0] == 1.0
    assert rec.at(1.5)[0] == 1.0  # ties go to the earlier sample
    assert rec.at(9.0)[0] == 2.0
    out = nominal_action(NominalPolicy(rec), pursuer(Z3), target(Z3), t=1.9)
    assert np.array_equal(out, [2.0, 0.0, 0.0])


def test_recorded_from_csv(tmp_path):
    path = tmp_path / "pi.csv"
    path.write_text("t,v1,v2,v3\n0,1,2,3\n0.5,4,5,6\n")
    rec = Recorded.from_csv(path)
    assert rec.times == (0.0, 0.5)
    assert np.array_equal(rec.at(0.4), [4.0, 5.0, 6.0])


@pytest.mark.parametrize("header", ["time,v1,v2,v3", "t,v1,v3,v2", "t,x1"])
def test_recorded_rejects_bad_headers(tmp_path, header):
    path = tmp_path / "pi.csv"
    path.write_text(header + "\n0,1,2,3\n")
    with pytest.raises(ValueError):
        Recorded.from_csv(path)


def test_recorded_rejects_bad_tables():
    with pytest.raises(ValueError):
        Recorded((), ())
    with pytest.raises(ValueError):
        Recorded((1.0, 0.0), ((0.0,), (1.0,)))


def test_clamp_limits_the_norm():
    pol = NominalPolicy(Constant((3.0, 4.0, 0.0)), clamp=1.0)
    out = nominal_action(pol, pursuer(Z3), target(Z3))
    assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-15)
    assert np.allclose(out, [0.6, 0.8, 0.0])
    small = NominalPolicy(Constant((0.1, 0.0, 0.0)), clamp=1.0)
    assert np.array_equal(nominal_action(small, pursuer(Z3), target(Z3)), [0.1, 0.0, 0.0])
    with pytest.raises(ValueError):
        NominalPolicy(clamp=-1.0)


def test_shape_and_finiteness_are_checked():
    with pytest.raises(ValueError):
        nominal_action(NominalPolicy(Constant((1.0, 2.0))), pursuer(Z3), target(Z3))
    with pytest.raises(ValueError):
        nominal_action(NominalPolicy(Constant((np.nan, 0.0, 0.0))), pursuer(Z3), target(Z3))


# reward


@pytest.mark.parametrize("d, expected", [(0.75, 0.1), (0.3, -0.02), (1.5, -0.05), (0.5, 0.1), (1.0, 0.1), (0.0, -0.05)])
def test_reward_examples(d, expected):
    assert reward(d, 0.5, 1.0) == pytest.approx(expected, abs=1e-15)


def test_reward_rejects_negative_distance():
    with pytest.raises(ValueError):
        reward(-0.1, 0.5, 1.0)


@given(st.floats(0, 10))
def test_reward_never_exceeds_the_band_value(d):
    val = reward(d, 0.5, 1.0)
    assert val <= 0.1
    assert (val == 0.1) == (0.5 <= d <= 1.0)


@given(st.floats(0, 10), st.floats(0, 10))
def test_reward_is_lipschitz_within_each_piece(d1, d2):
    r, R = 0.5, 1.0

    def piece(d):
        return 0 if d < r else (1 if d <= R else 2)

    if piece(d1) == piece(d2):
        assert abs(reward(d1, r, R) - reward(d2, r, R)) <= 0.1 * abs(d1 - d2) + 1e-12


@pytest.mark.parametrize("edge", [0.5, 1.0])
def test_reward_jumps_by_the_band_value_at_the_edges(edge):
    delta = 1e-9
    outside = edge - delta if edge == 0.5 else edge + delta
    assert reward(edge, 0.5, 1.0) - reward(outside, 0.5, 1.0) == pytest.approx(0.1, abs=1e-9)


# closed loop smoke checks


def _track(policy, start_offset, seconds=30.0):
    sc = sim.preset("circle")
    w = sc.initial_world()
    pursuers = tuple(replace(p, x=tg.p0 + start_offset, u=tg.p0_dot.copy()) for p, tg in zip(w.pursuers, w.targets))
    w = replace(w, pursuers=pursuers, obstacles=())
    pols = [NominalPolicy(policy)] * len(pursuers)
    dist = []
    for _ in range(int(round(seconds / sc.dt))):
        vs = np.array([nominal_action(p, s, tg, w.t) for p, s, tg in zip(pols, w.pursuers, w.targets)])
        w = integrate_step(w, vs, NO_DISTURBANCE, sc.dt)
        dist.append([np.linalg.norm(s.x - tg.p0) for s, tg in zip(w.pursuers, w.targets)])
    return np.array(dist)


def test_pd_tracker_reaches_the_band():
    dist = _track(PdTracker(), np.array([2.0, 0.0, 0.0]))
    for col in dist.T:
        assert np.any((col >= 0.5) & (col <= 1.0))


def test_pd_tracker_with_standoff_settles_in_the_band():
    off = 0.7 * np.array([0.0, 1.0, 1.0]) / np.sqrt(2.0)
    dist = _track(PdTracker(kp=4.0, kd=4.0, standoff=tuple(off)), np.array([2.0, 0.0, 0.0]), seconds=60.0)
    tail = dist[-100:]
    assert np.all((tail >= 0.5) & (tail <= 1.0))
