"""Pursuer and target dynamics, disturbance models and fixed-step integration.

Pursuers follow the integrator-augmented single-integrator model

    x_dot = f(x) + g(x) u + Y(x) theta
    u_dot = v + Z(x) xi

with ``v`` the acceleration-level command.  Targets are second-order agents
that track an analytic reference with a PD law plus an obstacle potential
field.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline


class DimensionError(ValueError):
    pass


class SingularityError(ValueError):
    pass


class DivergedError(RuntimeError):
    pass


def as_vec(values, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has dimension {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components: {arr}")
    return arr


# ---------------------------------------------------------------------------
# references


@dataclass(frozen=True)
class Circle:
    """``amplitude*sin(w t)`` on ``plane[0]``, ``amplitude*cos(w t)`` on ``plane[1]``."""

    amplitude: float
    frequency: float
    plane: tuple[int, int] = (0, 1)
    offset: float = 0.0
    dim: int = 3

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("circle frequency must be positive")

    def evaluate(self, t: float):
        a, w = self.amplitude, self.frequency
        i, j = self.plane
        p = np.full(self.dim, self.offset)
        pd = np.zeros(self.dim)
        pdd = np.zeros(self.dim)
        s, c = np.sin(w * t), np.cos(w * t)
        p[i], pd[i], pdd[i] = a * s, a * w * c, -a * w * w * s
        p[j], pd[j], pdd[j] = a * c, -a * w * s, -a * w * w * c
        return p, pd, pdd


@dataclass(frozen=True)
class FigureEight:
    """``amplitude*sin(f1 t)`` on ``plane[0]``, ``amplitude*sin(f2 t)`` on ``plane[1]``,
    constant ``offset`` elsewhere."""

    amplitude: float
    f1: float
    f2: float
    offset: float = 0.0
    plane: tuple[int, int] = (0, 1)
    dim: int = 3

    def __post_init__(self):
        if self.f1 <= 0 or self.f2 <= 0:
            raise ValueError("figure-eight frequencies must be positive")

    def evaluate(self, t: float):
        a = self.amplitude
        p = np.full(self.dim, self.offset)
        pd = np.zeros(self.dim)
        pdd = np.zeros(self.dim)
        for axis, w in zip(self.plane, (self.f1, self.f2)):
            s = np.sin(w * t)
            p[axis] = a * s
            pd[axis] = a * w * np.cos(w * t)
            pdd[axis] = -a * w * w * s
        return p, pd, pdd


@dataclass(frozen=True)
class Custom:
    """Reference given as a table of positions; derivatives come from a cubic spline."""

    times: tuple[float, ...]
    positions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.times) < 2 or len(self.times) != len(self.positions):
            raise ValueError("custom reference needs >= 2 samples with matching times")
        spline = CubicSpline(np.asarray(self.times), np.asarray(self.positions), axis=0)
        object.__setattr__(self, "_spline", spline)

    @property
    def dim(self) -> int:
        return len(self.positions[0])

    def evaluate(self, t: float):
        s = self._spline
        return s(t), s(t, 1), s(t, 2)


ReferenceKind = Union[Circle, FigureEight, Custom]


def reference_signal(kind: ReferenceKind, t: float):
    """Position, velocity and acceleration of a reference at time ``t``."""
    if t < 0:
        raise ValueError("reference time must be non-negative")
    return kind.evaluate(t)


# ---------------------------------------------------------------------------
# agents


@dataclass(frozen=True)
class PursuerState:
    x: np.ndarray
    u: np.ndarray
    id: int = 0

    def __post_init__(self):
        if self.x.shape != self.u.shape:
            raise DimensionError(f"pursuer {self.id}: dim(x)={self.x.shape} != dim(u)={self.u.shape}")


@dataclass(frozen=True)
class TargetState:
    p0: np.ndarray
    p0_dot: np.ndarray
    reference: ReferenceKind

    def __post_init__(self):
        if self.p0.shape != self.p0_dot.shape:
            raise DimensionError("target position and velocity dimensions differ")


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class WorldState:
    t: float
    pursuers: tuple[PursuerState, ...]
    targets: tuple[TargetState, ...]
    obstacles: tuple[Obstacle, ...] = ()

    def __post_init__(self):
        if len(self.pursuers) != len(self.targets):
            raise DimensionError("pursuers and targets must be paired one to one")
        if self.t < 0:
            raise ValueError("world time must be non-negative")

    @property
    def dim(self) -> int:
        return self.pursuers[0].x.shape[0]


# ---------------------------------------------------------------------------
# plant and disturbances


def _zero_drift(x):
    return np.zeros_like(x)


def _identity_gain(x):
    return np.eye(x.shape[0])


def _zero_drift_rate(x, x_dot):
    return np.zeros_like(x)


def _zero_gain_rate(x, x_dot):
    return np.zeros((x.shape[0], x.shape[0]))


@dataclass(frozen=True)
class Plant:
    """Known part ``f(x) + g(x) u`` of the pursuer model.

    ``f_dot`` and ``g_dot`` give the time derivatives of ``f`` and ``g`` along a
    velocity ``x_dot``.  The default is the single integrator.
    """

    f: Callable = _zero_drift
    g: Callable = _identity_gain
    f_dot: Callable = _zero_drift_rate
    g_dot: Callable = _zero_gain_rate


SINGLE_INTEGRATOR = Plant()


@dataclass(frozen=True)
class DisturbanceModel:
    """Parametric uncertainty ``Y(x) theta`` on positions and ``Z(x) xi`` on ``u``.

    ``kind`` is ``"sinusoidal"`` (``Y = sin x``, ``Z = cos x``, each a single
    column) or ``"zero"``.  ``theta`` and ``xi`` are the true coefficients; only
    the simulator reads them.
    """

    theta: np.ndarray = field(default_factory=lambda: np.ones(1))
    xi: np.ndarray = field(default_factory=lambda: np.ones(1))
    kind: str = "sinusoidal"

    def __post_init__(self):
        if self.kind not in ("sinusoidal", "zero"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    @property
    def q(self) -> int:
        return self.xi.shape[0]

    def Y(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros((x.shape[0], self.p))
        return np.repeat(np.sin(x)[:, None], self.p, axis=1)

    def Z(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros((x.shape[0], self.q))
        return np.repeat(np.cos(x)[:, None], self.q, axis=1)

    def Y_dot(self, x: np.ndarray, x_dot: np.ndarray) -> np.ndarray:
        """d/dt Y(x(t)) for a given velocity."""
        if self.kind == "zero":
            return np.zeros((x.shape[0], self.p))
        return np.repeat((np.cos(x) * x_dot)[:, None], self.p, axis=1)

    @property
    def y_rate_gain(self) -> float:
        """Bound L with ||Y_dot(x, w)|| <= L ||w|| for all x (spectral norm)."""
        return 0.0 if self.kind == "zero" else float(np.sqrt(self.p))

    def y_term(self, x):
        return self.Y(x) @ self.theta

    def z_term(self, x):
        return self.Z(x) @ self.xi

    def with_parameters(self, theta=None, xi=None) -> "DisturbanceModel":
        return replace(
            self,
            theta=self.theta if theta is None else np.atleast_1d(theta),
            xi=self.xi if xi is None else np.atleast_1d(xi),
        )


NO_DISTURBANCE = DisturbanceModel(kind="zero")


# ---------------------------------------------------------------------------
# derivatives


def pursuer_derivative(s: PursuerState, v, d: DisturbanceModel, plant: Plant = SINGLE_INTEGRATOR):
    """Return ``(x_dot, u_dot)`` of the augmented pursuer model."""
    v = np.asarray(v, dtype=float)
    n = s.x.shape[0]
    if v.shape != (n,) or s.u.shape != (n,):
        raise DimensionError(f"pursuer {s.id}: expected {n}-vectors, got v{v.shape}, u{s.u.shape}")
    x_dot = plant.f(s.x) + plant.g(s.x) @ s.u + d.y_term(s.x)
    u_dot = v + d.z_term(s.x)
    return x_dot, u_dot


@dataclass(frozen=True)
class TargetLaw:
    """Gains of the target tracking law.

    ``literal_velocity_term`` reproduces the ``k_d (p_r - p0_dot)`` variant in
    which position and velocity are mixed; ``repulsive_clamp`` zeroes the
    attractive tail of the potential field.
    """

    kp: float = 1.0
    kd: float = 1.0
    literal_velocity_term: bool = False
    repulsive_clamp: bool = False


DEFAULT_TARGET_LAW = TargetLaw()


def potential_field(p0, obstacles: Sequence[Obstacle], repulsive_clamp: bool = False) -> np.ndarray:
    """Sum of ``(1/d - 0.1) (p0 - c) / d**3`` over obstacle centres ``c``."""
    p0 = np.asarray(p0, dtype=float)
    out = np.zeros_like(p0)
    for ob in obstacles:
        diff = p0 - ob.center
        d = math.sqrt(float(diff @ diff))
        if d < 1e-9:
            raise SingularityError(f"target coincides with obstacle centre {ob.center}")
        gain = 1.0 / d - 0.1
        if repulsive_clamp:
            gain = max(gain, 0.0)
        out += gain * diff / d**3
    return out


def _target_accel(t, p, pd, reference, obstacles, law: TargetLaw):
    pr, prd, prdd = reference.evaluate(t)
    vel_err = (pr - pd) if law.literal_velocity_term else (prd - pd)
    return prdd + law.kp * (pr - p) + law.kd * vel_err + potential_field(p, obstacles, law.repulsive_clamp)


def target_derivative(tg: TargetState, t: float, obstacles: Sequence[Obstacle] = (), law: TargetLaw = DEFAULT_TARGET_LAW):
    """Return ``(p0_dot, p0_ddot)``."""
    return tg.p0_dot.copy(), _target_accel(t, tg.p0, tg.p0_dot, tg.reference, obstacles, law)


# ---------------------------------------------------------------------------
# integration

Controls = Union[np.ndarray, Sequence, Callable[[WorldState], np.ndarray]]


def _eval_controls(controls, w: WorldState) -> np.ndarray:
    v = controls(w) if callable(controls) else controls
    v = np.asarray(v, dtype=float)
    if v.shape != (len(w.pursuers), w.dim):
        raise DimensionError(f"controls have shape {v.shape}, expected {(len(w.pursuers), w.dim)}")
    return v


def _pack(w: WorldState) -> np.ndarray:
    parts = [np.concatenate([p.x, p.u]) for p in w.pursuers]
    parts += [np.concatenate([tg.p0, tg.p0_dot]) for tg in w.targets]
    return np.concatenate(parts)


def _unpack(w: WorldState, y: np.ndarray, t: float) -> WorldState:
    n = w.dim
    pursuers, targets = [], []
    off = 0
    for p in w.pursuers:
        pursuers.append(PursuerState(y[off:off + n].copy(), y[off + n:off + 2 * n].copy(), p.id))
        off += 2 * n
    for tg in w.targets:
        targets.append(TargetState(y[off:off + n].copy(), y[off + n:off + 2 * n].copy(), tg.reference))
        off += 2 * n
    return WorldState(t, tuple(pursuers), tuple(targets), w.obstacles)


def _world_rhs(w: WorldState, v: np.ndarray, d, plant, law) -> np.ndarray:
    out = []
    for p, vi in zip(w.pursuers, v):
        out.extend(pursuer_derivative(p, vi, d, plant))
    for tg in w.targets:
        out.extend(target_derivative(tg, w.t, w.obstacles, law))
    return np.concatenate(out)


def integrate_step(
    w: WorldState,
    v_all: Controls,
    d: DisturbanceModel,
    dt: float,
    method: str = "euler",
    plant: Plant = SINGLE_INTEGRATOR,
    law: TargetLaw = DEFAULT_TARGET_LAW,
) -> WorldState:
    """Advance the world by ``dt``.

    ``euler``: semi-implicit Euler for pursuers (``u`` first, then ``x`` with the
    new ``u``) and velocity Verlet for targets.  ``rk4``: classical RK4 on the
    joint state; when ``v_all`` is callable it is re-evaluated at every stage,
    otherwise it is held constant over the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if method == "euler":
        new = _euler_step(w, _eval_controls(v_all, w), d, dt, plant, law)
    elif method == "rk4":
        new = _rk4_step(w, v_all, d, dt, plant, law)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    # a sum is finite only if every term is (overflow counts as divergence)
    for p in new.pursuers:
        if not math.isfinite(float(p.x.sum() + p.u.sum())):
            raise DivergedError(f"pursuer {p.id} state diverged at t={new.t}")
    for tg in new.targets:
        if not math.isfinite(float(tg.p0.sum() + tg.p0_dot.sum())):
            raise DivergedError(f"target state diverged at t={new.t}")
    return new


def _euler_step(w, v, d, dt, plant, law):
    pursuers = []
    for p, vi in zip(w.pursuers, v):
        u_new = p.u + dt * (vi + d.z_term(p.x))
        x_new = p.x + dt * (plant.f(p.x) + plant.g(p.x) @ u_new + d.y_term(p.x))
        pursuers.append(PursuerState(x_new, u_new, p.id))
    targets = []
    t1 = w.t + dt
    for tg in w.targets:
        a0 = _target_accel(w.t, tg.p0, tg.p0_dot, tg.reference, w.obstacles, law)
        p1 = tg.p0 + dt * tg.p0_dot + 0.5 * dt * dt * a0
        a1 = _target_accel(t1, p1, tg.p0_dot + dt * a0, tg.reference, w.obstacles, law)
        targets.append(TargetState(p1, tg.p0_dot + 0.5 * dt * (a0 + a1), tg.reference))
    return WorldState(t1, tuple(pursuers), tuple(targets), w.obstacles)


def _rk4_step(w, controls, d, dt, plant, law):
    y0 = _pack(w)

    def rhs(t, y):
        ws = _unpack(w, y, t)
        return _world_rhs(ws, _eval_controls(controls, ws), d, plant, law)

    k1 = rhs(w.t, y0)
    k2 = rhs(w.t + dt / 2, y0 + dt / 2 * k1)
    k3 = rhs(w.t + dt / 2, y0 + dt / 2 * k2)
    k4 = rhs(w.t + dt, y0 + dt * k3)
    return _unpack(w, y0 + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), w.t + dt)
