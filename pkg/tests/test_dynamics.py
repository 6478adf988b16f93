import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safepursuit import sim
from safepursuit.dynamics import (
    NO_DISTURBANCE,
    Circle,
    Custom,
    DimensionError,
    DisturbanceModel,
    DivergedError,
    FigureEight,
    Obstacle,
    PursuerState,
    SingularityError,
    TargetLaw,
    TargetState,
    WorldState,
    integrate_step,
    potential_field,
    pursuer_derivative,
    reference_signal,
    target_derivative,
)
from safepursuit.policy import NominalPolicy, PdTracker, nominal_action

SINUS = DisturbanceModel(theta=np.ones(1), xi=np.ones(1))
CIRCLE1 = Circle(5.0, 0.1, plane=(0, 1))
FIG8_1 = FigureEight(5.0, 0.1, 0.2, offset=3.0, plane=(0, 1))

finite = st.floats(-20, 20, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def pursuer(x, u):
    return PursuerState(np.array(x, float), np.array(u, float))


def still(position):
    # a reference that never moves
    p = tuple(float(c) for c in position)
    return Custom((0.0, 1.0, 2.0), (p, p, p))


# pursuer_derivative


def test_derivative_at_origin_sees_cos_on_u():
    x_dot, u_dot = pursuer_derivative(pursuer([0, 0, 0], [0, 0, 0]), np.zeros(3), SINUS)
    assert np.array_equal(x_dot, [0, 0, 0])
    assert np.array_equal(u_dot, [1, 1, 1])


def test_derivative_is_single_integrator_without_disturbance():
    x_dot, u_dot = pursuer_derivative(pursuer([0, 0, 0], [1, 2, 3]), np.zeros(3), NO_DISTURBANCE)
    assert np.array_equal(x_dot, [1, 2, 3])
    assert np.array_equal(u_dot, [0, 0, 0])


def test_derivative_at_quarter_turn():
    x_dot, u_dot = pursuer_derivative(pursuer([math.pi / 2, 0, 0], [0, 0, 0]), np.array([1.0, 0, 0]), SINUS)
    # hand evaluation: sin(pi/2) = 1, sin(0) = 0; cos(pi/2) = 0, cos(0) = 1
    assert np.allclose(x_dot, [1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(u_dot, [1.0, 1.0, 1.0], atol=1e-15)


def test_derivative_rejects_wrong_dimension():
    with pytest.raises(DimensionError):
        pursuer_derivative(pursuer([0, 0, 0], [0, 0, 0]), np.zeros(2), SINUS)
    with pytest.raises(DimensionError):
        PursuerState(np.zeros(3), np.zeros(2))


# references


def test_circle_starts_on_y_axis():
    p, pd, _ = reference_signal(CIRCLE1, 0.0)
    assert np.allclose(p, [0, 5, 0])
    assert np.allclose(pd, [0.5, 0, 0])


def test_figure_eight_starts_at_offset():
    p, _, _ = reference_signal(FIG8_1, 0.0)
    assert np.allclose(p, [0, 0, 3])


def test_circle_velocity_matches_central_difference():
    h = 1e-5
    # the closed form is defined for t < 0 too, so difference through it directly
    central = (CIRCLE1.evaluate(h)[0] - CIRCLE1.evaluate(-h)[0]) / (2 * h)
    assert np.allclose(central, [0.5, 0, 0], rtol=0, atol=1e-9)
    assert np.allclose(reference_signal(CIRCLE1, 0.0)[1], central, rtol=0, atol=1e-9)


def test_reference_rejects_negative_time():
    with pytest.raises(ValueError):
        reference_signal(CIRCLE1, -1.0)


def test_frequencies_must_be_positive():
    with pytest.raises(ValueError):
        Circle(5.0, 0.0)
    with pytest.raises(ValueError):
        FigureEight(5.0, 0.1, -0.2)


@pytest.mark.parametrize(
    "ref",
    [
        CIRCLE1,
        Circle(5.0, 0.1, plane=(0, 2)),
        FIG8_1,
        FigureEight(5.0, 0.1, 0.2, offset=3.0, plane=(0, 2)),
    ],
)
def test_reference_derivatives_match_finite_differences(ref, rng):
    h = 1e-5
    for t in rng.uniform(h, 60.0, 100):
        p_m, pd_m, _ = reference_signal(ref, t - h)
        p_p, pd_p, _ = reference_signal(ref, t + h)
        _, pd, pdd = reference_signal(ref, t)
        fd_v = (p_p - p_m) / (2 * h)
        fd_a = (pd_p - pd_m) / (2 * h)
        assert np.linalg.norm(fd_v - pd) <= 1e-6 * np.linalg.norm(pd)
        assert np.linalg.norm(fd_a - pdd) <= 1e-6 * np.linalg.norm(pdd)


def test_custom_reference_interpolates_table():
    ref = Custom((0.0, 1.0, 2.0, 3.0), ((0, 0, 0), (1, 2, 0), (2, 4, 0), (3, 6, 0)))
    p, pd, pdd = reference_signal(ref, 1.5)
    assert np.allclose(p, [1.5, 3.0, 0])
    assert np.allclose(pd, [1, 2, 0])
    assert np.allclose(pdd, 0, atol=1e-12)


# potential field


def test_potential_field_unit_distance():
    f = potential_field([1.0, 0, 0], [Obstacle(np.zeros(3), 0.3)])
    assert np.allclose(f, [0.9, 0, 0])


def test_potential_field_vanishes_at_ten():
    f = potential_field([10.0, 0, 0], [Obstacle(np.zeros(3), 0.3)])
    assert np.allclose(f, 0, atol=1e-15)


def test_potential_field_symmetric_obstacles_cancel():
    obs = [Obstacle(np.array([2.0, 0, 0]), 0.3), Obstacle(np.array([-2.0, 0, 0]), 0.3)]
    assert np.allclose(potential_field(np.zeros(3), obs), 0, atol=1e-15)


def test_potential_field_is_attractive_beyond_ten_unless_clamped():
    ob = [Obstacle(np.zeros(3), 0.3)]
    assert potential_field([20.0, 0, 0], ob)[0] < 0
    assert potential_field([20.0, 0, 0], ob, repulsive_clamp=True)[0] == 0


def test_potential_field_singularity():
    with pytest.raises(SingularityError):
        potential_field([1.0, 1.0, 1.0], [Obstacle(np.ones(3), 0.3)])


@settings(max_examples=200, deadline=None)
@given(center=vec3, d=vec3)
def test_potential_field_antisymmetric_under_reflection(center, d):
    if np.linalg.norm(d) < 1e-3:
        return
    ob = [Obstacle(center, 0.3)]
    plus = potential_field(center + d, ob)
    minus = potential_field(center - d, ob)
    assert np.allclose(plus, -minus, rtol=1e-12, atol=1e-15)


# target dynamics


def test_target_on_reference_follows_its_acceleration():
    p, pd, pdd = reference_signal(CIRCLE1, 4.0)
    _, acc = target_derivative(TargetState(p, pd, CIRCLE1), 4.0)
    assert np.allclose(acc, pdd, atol=1e-15)


def test_target_pd_on_static_reference():
    ref = still([1.0, 2.0, 3.0])
    e = np.array([0.5, -0.25, 1.0])
    _, acc = target_derivative(TargetState(np.array([1.0, 2.0, 3.0]) - e, np.zeros(3), ref), 0.5)
    assert np.allclose(acc, e, atol=1e-12)


def test_target_feels_obstacle():
    t = 0.0
    p, pd, pdd = reference_signal(CIRCLE1, t)
    ob = Obstacle(p + np.array([1.0, 0, 0]), 0.3)
    _, acc = target_derivative(TargetState(p, pd, CIRCLE1), t, [ob])
    assert np.allclose(acc, pdd + np.array([-0.9, 0, 0]), atol=1e-12)


def test_literal_velocity_term_variant():
    t = 2.0
    p, pd, pdd = reference_signal(CIRCLE1, t)
    _, acc = target_derivative(TargetState(p, pd, CIRCLE1), t, law=TargetLaw(literal_velocity_term=True))
    assert np.allclose(acc, pdd + (p - pd))


# integration


def _world(xs, us, targets=None, obstacles=()):
    ps = tuple(PursuerState(np.array(x, float), np.array(u, float), i) for i, (x, u) in enumerate(zip(xs, us)))
    if targets is None:
        targets = tuple(TargetState(np.array([9.0, 9.0, 9.0]), np.zeros(3), still([9.0, 9.0, 9.0])) for _ in ps)
    return WorldState(0.0, ps, targets, obstacles)


def test_fixed_point_only_advances_time():
    w = _world([[1.0, 2.0, 3.0]], [[0, 0, 0]])
    w1 = integrate_step(w, np.zeros((1, 3)), NO_DISTURBANCE, 0.1)
    assert w1.t == pytest.approx(0.1)
    assert np.array_equal(w1.pursuers[0].x, w.pursuers[0].x)
    assert np.array_equal(w1.pursuers[0].u, w.pursuers[0].u)
    assert np.allclose(w1.targets[0].p0, w.targets[0].p0, atol=1e-15)


def test_constant_velocity_step():
    w = _world([[0, 0, 0]], [[1, 0, 0]])
    w1 = integrate_step(w, np.zeros((1, 3)), NO_DISTURBANCE, 0.1)
    assert np.allclose(w1.pursuers[0].x, [0.1, 0, 0], atol=1e-15)


def test_semi_implicit_euler_uses_new_u():
    w = _world([[0, 0, 0]], [[0, 0, 0]])
    w1 = integrate_step(w, np.array([[1.0, 0, 0]]), NO_DISTURBANCE, 0.1)
    assert np.allclose(w1.pursuers[0].u, [0.1, 0, 0])
    assert np.allclose(w1.pursuers[0].x, [0.01, 0, 0])


def test_zero_disturbance_and_zero_v_is_affine():
    u = np.array([0.3, -1.2, 0.7])
    w = _world([[1.0, 2.0, 3.0]], [u])
    x0 = w.pursuers[0].x.copy()
    for k in range(1, 101):
        w = integrate_step(w, np.zeros((1, 3)), NO_DISTURBANCE, 0.1)
        assert np.array_equal(w.pursuers[0].u, u)
        assert np.allclose(w.pursuers[0].x, x0 + u * (0.1 * k), rtol=0, atol=1e-13)


def test_rk4_coarse_matches_fine_euler():
    w0 = _world([[0.3, -0.2, 0.5]], [[1.0, 0.5, -0.5]])
    v = np.array([[0.2, -0.1, 0.3]])
    a = w0
    for _ in range(10):
        a = integrate_step(a, v, SINUS, 0.1, method="rk4")
    b = w0
    for _ in range(1000):
        b = integrate_step(b, v, SINUS, 0.001)
    assert np.max(np.abs(a.pursuers[0].x - b.pursuers[0].x)) < 1e-3


def test_step_rejects_bad_dt_and_method():
    w = _world([[0, 0, 0]], [[0, 0, 0]])
    with pytest.raises(ValueError):
        integrate_step(w, np.zeros((1, 3)), NO_DISTURBANCE, 0.0)
    with pytest.raises(ValueError):
        integrate_step(w, np.zeros((1, 3)), NO_DISTURBANCE, 0.1, method="midpoint")
    with pytest.raises(DimensionError):
        integrate_step(w, np.zeros((2, 3)), NO_DISTURBANCE, 0.1)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning", "ignore:invalid value:RuntimeWarning")
def test_divergence_is_reported():
    w = _world([[0, 0, 0]], [[1e308, 0, 0]])
    with pytest.raises(DivergedError):
        integrate_step(w, np.array([[1e308, 0, 0]]), NO_DISTURBANCE, 10.0)


def _circle_positions(dt, method, horizon=2.0, every=0.2):
    """Pursuer and target positions of the unfiltered circle scenario at
    multiples of ``every``."""
    sc = sim.preset("circle")
    pols = [NominalPolicy(PdTracker())] * 2

    def controls(w):
        return np.array([nominal_action(p, s, tg, w.t) for p, s, tg in zip(pols, w.pursuers, w.targets)])

    w = sc.initial_world()
    stride = int(round(every / dt))
    out = []
    for k in range(1, int(round(horizon / dt)) + 1):
        w = integrate_step(w, controls, sc.disturbance, dt, method)
        if k % stride == 0:
            out.append(np.concatenate([p.x for p in w.pursuers] + [tg.p0 for tg in w.targets]))
    return np.array(out)


def test_order_of_accuracy():
    ref = _circle_positions(1e-3, "rk4")
    for method, dts, band in (("euler", (0.02, 0.01, 0.005), (1.8, 2.2)), ("rk4", (0.2, 0.1, 0.05), (14, 18))):
        errs = [np.max(np.abs(_circle_positions(dt, method) - ref)) for dt in dts]
        for coarse, fine in zip(errs, errs[1:]):
            assert band[0] <= coarse / fine <= band[1], (method, errs)
