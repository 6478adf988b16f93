"""Integral concurrent-learning estimation of the disturbance coefficients.

Every step a window of length ``window`` ending at the current time is
integrated into a :class:`SampleRecord`; the last ``samples`` records drive a
gradient update of ``theta_hat`` and ``xi_hat``.  Alongside the estimates the
estimator propagates certified error bounds ``nu_bar >= |theta - theta_hat|``
and ``eta_bar >= |xi - xi_hat|`` that decay with the minimum eigenvalue of the
stacked regressor Gram matrices.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import SINGLE_INTEGRATOR, DisturbanceModel, Plant


@dataclass(frozen=True)
class EstimatorConfig:
    gamma_theta: float = 10.0
    gamma_xi: float = 10.0
    window: float = 1.0
    samples: int = 10
    theta_box: tuple[float, float] = (-2.0, 2.0)
    xi_box: tuple[float, float] = (-2.0, 2.0)
    theta0: float = 0.0
    xi0: float = 0.0
    eps_theta: float = 2.0
    eps_xi: float = 2.0
    # "step" reproduces the integrator's own update rule, so the regression
    # identity holds to rounding; "trapezoid" is the composite rule.
    quadrature: str = "trapezoid"
    # resolution below which the certified bounds are not pushed
    bound_floor: float = 1e-9

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("estimator window must be positive")
        if self.samples < 1:
            raise ValueError("estimator needs at least one sample")
        if self.gamma_theta <= 0 or self.gamma_xi <= 0:
            raise ValueError("adaptation gains must be positive")
        if self.quadrature not in ("trapezoid", "step"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        for name, box, init, eps in (
            ("theta", self.theta_box, self.theta0, self.eps_theta),
            ("xi", self.xi_box, self.xi0, self.eps_xi),
        ):
            lo, hi = box
            if not lo <= init <= hi:
                raise ValueError(f"initial {name} estimate {init} outside {box}")
            if eps < max(hi - init, init - lo) * (1 - 1e-12):
                raise ValueError(f"eps_{name}={eps} does not cover the box {box} from {init}")


@dataclass(frozen=True)
class SampleRecord:
    t_j: float
    delta_x: np.ndarray
    delta_u: np.ndarray
    F: np.ndarray
    Yint: np.ndarray
    G: np.ndarray
    Zint: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class EstimatorState:
    theta_hat: np.ndarray
    xi_hat: np.ndarray
    buffer: tuple[SampleRecord, ...] = ()
    nu_bar: float = 0.0
    eta_bar: float = 0.0
    # accumulated exponents gamma * int lambda dt
    theta_decay: float = 0.0
    xi_decay: float = 0.0


def initial_state(cfg: EstimatorConfig, p: int = 1, q: int = 1) -> EstimatorState:
    return EstimatorState(
        theta_hat=np.full(p, cfg.theta0),
        xi_hat=np.full(q, cfg.xi0),
        nu_bar=cfg.eps_theta,
        eta_bar=cfg.eps_xi,
    )


class _Entry:
    __slots__ = ("t", "x", "u", "v", "Y", "Z", "f", "g")


class History:
    """Per-pursuer trace of ``(t, x, u, v)`` at integrator steps.

    Regressor evaluations are cached on insertion so every window integral
    is a sum over stored arrays.  ``v`` of the latest entry stays ``None``
    until the control applied from that state is known.
    """

    def __init__(self, model: DisturbanceModel, plant: Plant = SINGLE_INTEGRATOR, maxlen: int | None = None):
        self.model = model
        self.plant = plant
        self.entries: deque = deque(maxlen=maxlen)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> _Entry:
        return self.entries[i]

    def record_state(self, t, x, u):
        e = _Entry()
        e.t = float(t)
        e.x = np.asarray(x, dtype=float)
        e.u = np.asarray(u, dtype=float)
        e.v = None
        e.Y = self.model.Y(e.x)
        e.Z = self.model.Z(e.x)
        e.f = self.plant.f(e.x)
        e.g = self.plant.g(e.x)
        self.entries.append(e)

    def record_control(self, v):
        """Control applied from the latest recorded state."""
        last = self.entries[-1]
        if last.v is not None:
            raise ValueError("control already recorded for the latest state")
        last.v = np.asarray(v, dtype=float)

    @classmethod
    def from_arrays(cls, t, x, u, v, model: DisturbanceModel, plant: Plant = SINGLE_INTEGRATOR) -> "History":
        h = cls(model, plant)
        for k in range(len(t)):
            h.record_state(t[k], x[k], u[k])
            if k < len(v):
                h.record_control(v[k])
        return h


def _total(arrays):
    # plain accumulation; np.sum over a short list costs more than the adds
    it = iter(arrays)
    out = np.array(next(it), dtype=float)
    for a in it:
        out += a
    return out


def record_sample(history: History, cfg: EstimatorConfig) -> Optional[SampleRecord]:
    """Window integrals ending at the latest stored state, or ``None`` when the
    history does not yet span ``cfg.window``."""
    n = len(history)
    if n < 2:
        return None
    dt = history[-1].t - history[-2].t
    m = int(round(cfg.window / dt))
    if m < 1 or n < m + 1:
        return None
    win = [history[i] for i in range(n - m - 1, n)]
    if any(e.v is None for e in win[:-1]):
        return None
    first, last = win[0], win[-1]
    head = win[:-1]
    V = dt * _total(e.v for e in head)
    if cfg.quadrature == "step":
        # semi-implicit Euler: x+ = x + dt (f(x) + g(x) u+ + Y(x) theta)
        Yint = dt * _total(e.Y for e in head)
        Zint = dt * _total(e.Z for e in head)
        F = dt * _total(e.f for e in head)
        G = dt * _total(a.g @ b.u for a, b in zip(head, win[1:]))
    else:
        w = np.full(m + 1, dt)
        w[0] = w[-1] = dt / 2
        Yint = np.tensordot(w, np.stack([e.Y for e in win]), axes=1)
        Zint = np.tensordot(w, np.stack([e.Z for e in win]), axes=1)
        F = w @ np.stack([e.f for e in win])
        G = w @ np.stack([e.g @ e.u for e in win])
    return SampleRecord(
        t_j=last.t,
        delta_x=last.x - first.x,
        delta_u=last.u - first.u,
        F=F,
        Yint=Yint,
        G=G,
        Zint=Zint,
        V=V,
    )


def push_sample(es: EstimatorState, rec: SampleRecord, cfg: EstimatorConfig) -> EstimatorState:
    buf = (es.buffer + (rec,))[-cfg.samples:]
    return replace(es, buffer=buf)


def _gain_and_rate(gram: np.ndarray, gamma: float, dt: float):
    # Cap the step so that dt * gamma * lambda_max <= 1: the discrete update is
    # then a contraction with factor <= 1 - dt*gamma*lambda_min <= exp(-...).
    if gram.shape == (1, 1):
        lam_min = lam_max = max(float(gram[0, 0]), 0.0)
    else:
        eig = np.linalg.eigvalsh(gram)
        lam_min, lam_max = max(float(eig[0]), 0.0), float(eig[-1])
    g = gamma
    if lam_max > 0 and dt * g * lam_max > 1.0:
        g = 1.0 / (dt * lam_max)
    return g, lam_min


def update_theta(es: EstimatorState, cfg: EstimatorConfig, dt: float) -> EstimatorState:
    if not es.buffer:
        return es
    Yint = np.stack([r.Yint for r in es.buffer])
    resid = np.stack([r.delta_x - r.F - r.G for r in es.buffer]) - Yint @ es.theta_hat
    gram = np.einsum("snp,snr->pr", Yint, Yint)
    grad = np.einsum("snp,sn->p", Yint, resid)
    gamma, lam = _gain_and_rate(gram, cfg.gamma_theta, dt)
    theta = np.clip(es.theta_hat + dt * gamma * grad, *cfg.theta_box)
    decay = es.theta_decay + dt * gamma * lam
    nu = max(cfg.eps_theta * np.exp(-decay), cfg.bound_floor)
    return replace(es, theta_hat=theta, theta_decay=decay, nu_bar=min(nu, es.nu_bar))


def update_xi(es: EstimatorState, cfg: EstimatorConfig, dt: float) -> EstimatorState:
    # u_dot = v + Z xi, so the window identity is delta_u = V + Zint xi
    if not es.buffer:
        return es
    Zint = np.stack([r.Zint for r in es.buffer])
    resid = np.stack([r.delta_u - r.V for r in es.buffer]) - Zint @ es.xi_hat
    gram = np.einsum("snq,snr->qr", Zint, Zint)
    grad = np.einsum("snq,sn->q", Zint, resid)
    gamma, lam = _gain_and_rate(gram, cfg.gamma_xi, dt)
    xi = np.clip(es.xi_hat + dt * gamma * grad, *cfg.xi_box)
    decay = es.xi_decay + dt * gamma * lam
    eta = max(cfg.eps_xi * np.exp(-decay), cfg.bound_floor)
    return replace(es, xi_hat=xi, xi_decay=decay, eta_bar=min(eta, es.eta_bar))


def error_bounds(es: EstimatorState, cfg: EstimatorConfig) -> tuple[float, float]:
    return es.nu_bar, es.eta_bar


@dataclass
class AdaptiveEstimator:
    """Stateful wrapper used by the simulator: one per pursuer."""

    cfg: EstimatorConfig
    model: DisturbanceModel
    dt: float
    plant: Plant = SINGLE_INTEGRATOR
    state: EstimatorState = field(init=False)
    history: History = field(init=False)

    def __post_init__(self):
        self.state = initial_state(self.cfg, self.model.p, self.model.q)
        keep = int(round(self.cfg.window / self.dt)) + 2
        self.history = History(self.model, self.plant, maxlen=keep)

    def observe(self, t, x, u) -> EstimatorState:
        self.history.record_state(t, x, u)
        rec = record_sample(self.history, self.cfg)
        if rec is not None:
            s = push_sample(self.state, rec, self.cfg)
            s = update_theta(s, self.cfg, self.dt)
            self.state = update_xi(s, self.cfg, self.dt)
        return self.state

    def applied(self, v):
        self.history.record_control(v)
