"""Scenarios, the closed-loop pursuit simulation and run metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import cbf
from .cbf import ConstraintContext, ConstraintRow, Neighbor, SafetyParams
from .dynamics import (
    DEFAULT_TARGET_LAW,
    SINGLE_INTEGRATOR,
    Circle,
    DisturbanceModel,
    DivergedError,
    FigureEight,
    Obstacle,
    Plant,
    PursuerState,
    TargetLaw,
    TargetState,
    WorldState,
    integrate_step,
    reference_signal,
)
from .estimator import AdaptiveEstimator, EstimatorConfig
from .filter import Region, SwitchDecision, classify, hybrid_control
from .policy import NominalPolicy, PdTracker, nominal_action, reward
from .qp import InfeasibleError

VIOLATION_TOL = 1e-6


class ScenarioError(ValueError):
    pass


class SafetyFault(RuntimeError):
    """The filter could not produce an admissible action; carries the state."""

    def __init__(self, message, world: WorldState, pursuer: int, rows=()):
        super().__init__(message)
        self.world = world
        self.pursuer = pursuer
        self.rows = tuple(rows)

    def dump(self) -> str:
        lines = [str(self), f"t = {self.world.t:.6f}"]
        for p in self.world.pursuers:
            lines.append(f"pursuer {p.id}: x={p.x.tolist()} u={p.u.tolist()}")
        for j, tg in enumerate(self.world.targets):
            lines.append(f"target {j}: p0={tg.p0.tolist()} p0_dot={tg.p0_dot.tolist()}")
        for row in self.rows:
            lines.append(f"row {row.label}: a={row.a.tolist()} b={row.b!r} h={row.h_value!r}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Scenario:
    name: str
    pursuers: tuple[PursuerState, ...]
    targets: tuple[TargetState, ...]
    obstacles: tuple[Obstacle, ...]
    safety: SafetyParams = SafetyParams()
    estimator: EstimatorConfig = EstimatorConfig()
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    policies: tuple[NominalPolicy, ...] = ()
    dt: float = 0.1
    steps: int = 600
    seed: int = 0
    # standard deviation of a seeded perturbation of the initial pursuer positions
    initial_jitter: float = 0.0
    method: str = "euler"
    plant: Plant = SINGLE_INTEGRATOR
    target_law: TargetLaw = DEFAULT_TARGET_LAW

    def __post_init__(self):
        if not self.policies:
            object.__setattr__(self, "policies", tuple(NominalPolicy() for _ in self.pursuers))
        problems = check_scenario(self)
        if problems:
            raise ScenarioError("; ".join(problems))

    @property
    def n_pursuers(self) -> int:
        return len(self.pursuers)

    def initial_world(self) -> WorldState:
        pursuers = self.pursuers
        if self.initial_jitter > 0:
            rng = np.random.default_rng(self.seed)
            pursuers = tuple(
                replace(p, x=p.x + self.initial_jitter * rng.standard_normal(p.x.shape)) for p in pursuers
            )
        return WorldState(0.0, pursuers, self.targets, self.obstacles)


def neighbors_of(i: int, w: WorldState, theta_hat, model: DisturbanceModel, plant: Plant, r: float, reciprocal: bool = True):
    """Every agent pursuer ``i`` must keep clear of: other pursuers, all
    targets, obstacles (inflated by their radius).

    With ``reciprocal`` each pair of pursuers splits its collision condition
    in half instead of bounding the other pursuer's acceleration.
    """
    out = []
    me = w.pursuers[i]
    for j, p in enumerate(w.pursuers):
        if j == i:
            continue
        Yj = model.Y(p.x)
        vel = plant.f(p.x) + plant.g(p.x) @ p.u + Yj @ theta_hat
        if reciprocal:
            out.append(Neighbor(p.x, vel, r, f"pursuer{j}", Yj, share=0.5))
        else:
            out.append(Neighbor(p.x, vel, r, f"pursuer{j}", Yj))
    for j, tg in enumerate(w.targets):
        out.append(Neighbor(tg.p0, tg.p0_dot, r, f"target{j}"))
    for j, ob in enumerate(w.obstacles):
        out.append(Neighbor(ob.center, np.zeros_like(me.x), r + ob.radius, f"obstacle{j}", accel_bound=0.0))
    return out


def pursuer_context(i: int, w: WorldState, theta_hat, xi_hat, nu_bar, eta_bar, sc: "Scenario") -> ConstraintContext:
    me = w.pursuers[i]
    tg = w.targets[i]
    return cbf.make_context(
        me.x,
        me.u,
        tg.p0,
        tg.p0_dot,
        neighbors_of(i, w, np.atleast_1d(theta_hat), sc.disturbance, sc.plant, sc.safety.r),
        theta_hat,
        xi_hat,
        nu_bar,
        eta_bar,
        sc.disturbance,
        sc.plant,
    )


def check_scenario(sc: Scenario) -> list[str]:
    """Problems that make a scenario unusable, including the initial safety
    conditions (``h > 0`` for every barrier and ``h_dot + alpha0 h > 0`` for the
    second-order ones, evaluated with the initial estimates)."""
    problems = []
    if sc.dt <= 0:
        problems.append("dt must be positive")
    if sc.steps < 1:
        problems.append("steps must be at least 1")
    if len(sc.pursuers) != len(sc.targets):
        problems.append("pursuers and targets must be paired one to one")
        return problems
    if len(sc.policies) != len(sc.pursuers):
        problems.append("one nominal policy per pursuer is required")
    if not sc.pursuers:
        problems.append("at least one pursuer is required")
        return problems
    if problems:
        return problems
    w = sc.initial_world()
    p = sc.safety
    est = sc.estimator
    for i in range(len(w.pursuers)):
        try:
            ctx = pursuer_context(
                i, w, np.full(sc.disturbance.p, est.theta0), np.full(sc.disturbance.q, est.xi0), 0.0, 0.0, sc
            )
        except ValueError as exc:
            problems.append(f"pursuer {i}: {exc}")
            continue
        h_u, h_s, h_c = cbf.barrier_values(ctx, p)
        if not h_u > 0:
            problems.append(f"pursuer {i}: h_u(0) = {h_u:.6g} <= 0 (|u| exceeds kappa)")
        if not h_s > 0:
            problems.append(f"pursuer {i}: h_s(0) = {h_s:.6g} <= 0 (target outside sensing radius R)")
        for k, h in enumerate(h_c):
            if not h > 0:
                problems.append(f"pursuer {i}: h_c(0) = {h:.6g} <= 0 against {ctx.neighbors[k].label}")
        for row in cbf.build_rows(ctx, p)[1:]:
            if row.h_value > 0 and not row.hbar_value > 0:
                problems.append(f"pursuer {i}: hbar(0) = {row.hbar_value:.6g} <= 0 for {row.label}")
    return problems


# ---------------------------------------------------------------------------
# presets


PRESET_OBSTACLES = (
    Obstacle(np.array([4.70, 3.25, 3.00]), 0.3),
    Obstacle(np.array([-4.20, 3.00, 4.75]), 0.3),
)
PRESET_OFFSET = np.array([0.7, 0.0, 0.0])

PRESET_SAFETY = SafetyParams(
    alpha0=10.0,
    iota=7.0,
    iota_t=7.0,
    rho_v=0.0,
    rho_a=0.25,
    keep_relative_speed=True,
    h_margin=0.1,
)
PRESET_ESTIMATOR = EstimatorConfig(
    gamma_theta=1e6,
    gamma_xi=1e6,
    window=0.1,
    samples=5,
    theta_box=(0.85, 1.05),
    xi_box=(0.85, 1.05),
    theta0=0.95,
    xi0=0.95,
    eps_theta=0.1,
    eps_xi=0.1,
    quadrature="step",
)
# each pursuer holds station on its own side of its target, across the line
# along which the two targets meet
_SIDE = 0.7 / np.sqrt(2.0)
PRESET_POLICIES = (
    NominalPolicy(PdTracker(25.0, 10.0, (0.0, _SIDE, _SIDE))),
    NominalPolicy(PdTracker(25.0, 10.0, (0.0, -_SIDE, -_SIDE))),
)


def _preset_references(name: str):
    if name == "circle":
        return Circle(5.0, 0.1, plane=(0, 1)), Circle(5.0, 0.1, plane=(0, 2))
    if name == "figure8":
        return FigureEight(5.0, 0.1, 0.2, offset=3.0, plane=(0, 1)), FigureEight(5.0, 0.1, 0.2, offset=3.0, plane=(0, 2))
    raise KeyError(name)


PRESETS = ("circle", "figure8")


def preset(name: str, **overrides) -> Scenario:
    try:
        refs = _preset_references(name)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}") from None
    targets, pursuers = [], []
    for i, ref in enumerate(refs):
        p, pd, _ = reference_signal(ref, 0.0)
        targets.append(TargetState(p, pd, ref))
        pursuers.append(PursuerState(p + PRESET_OFFSET, pd.copy(), i))
    kw = dict(
        name=name,
        pursuers=tuple(pursuers),
        targets=tuple(targets),
        obstacles=PRESET_OBSTACLES,
        safety=PRESET_SAFETY,
        estimator=PRESET_ESTIMATOR,
        policies=PRESET_POLICIES,
        disturbance=DisturbanceModel(theta=np.ones(1), xi=np.ones(1)),
        dt=0.1,
        steps=600,
    )
    kw.update(overrides)
    return Scenario(**kw)


# ---------------------------------------------------------------------------
# logging


@dataclass
class StepRecord:
    step: int
    t: float
    pursuer: int
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pi: np.ndarray
    region: Region
    h_u: float
    h_s: float
    h_c: np.ndarray
    lambdas: np.ndarray
    theta_hat: np.ndarray
    xi_hat: np.ndarray
    nu_bar: float
    eta_bar: float
    reward: float
    kkt_stat: float
    kkt_comp: float
    kkt_dual: float = 0.0
    relaxed: tuple = ()
    rows: tuple[ConstraintRow, ...] = ()
    context: Optional[ConstraintContext] = None

    @property
    def h_c_min(self) -> float:
        return float(np.min(self.h_c)) if self.h_c.size else np.inf

    @property
    def h_min(self) -> float:
        return min(self.h_u, self.h_s, self.h_c_min)


@dataclass
class SimLog:
    scenario: Scenario
    filtered: bool
    records: list[StepRecord] = field(default_factory=list)
    worlds: list[WorldState] = field(default_factory=list)
    wall_time: float = 0.0

    def for_pursuer(self, i: int) -> list[StepRecord]:
        return [r for r in self.records if r.pursuer == i]

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# the loop


def _simulate(sc: Scenario, filtered: bool, keep_context: bool = True) -> SimLog:
    start = time.perf_counter()
    log = SimLog(sc, filtered)
    w = sc.initial_world()
    model, plant, params = sc.disturbance, sc.plant, sc.safety
    estimators = [AdaptiveEstimator(sc.estimator, model, sc.dt, plant) for _ in w.pursuers]
    log.worlds.append(w)
    for step in range(sc.steps):
        states = [est.observe(w.t, p.x, p.u) for est, p in zip(estimators, w.pursuers)]
        controls = []
        for i, (p, tg, es) in enumerate(zip(w.pursuers, w.targets, states)):
            ctx = pursuer_context(i, w, es.theta_hat, es.xi_hat, es.nu_bar, es.eta_bar, sc)
            rows = cbf.build_rows(ctx, params)
            pi = nominal_action(sc.policies[i], p, tg, w.t)
            sol = None
            if filtered:
                try:
                    v, decision, sol = hybrid_control(pi, rows)
                except InfeasibleError as exc:
                    raise SafetyFault(f"pursuer {i} at step {step}: {exc}", w, i, rows) from exc
            else:
                v, decision = pi, classify(pi, rows)
            estimators[i].applied(v)
            controls.append(v)
            h_u, h_s, h_c = cbf.barrier_values(ctx, params)
            kkt = sol.kkt if sol is not None else None
            log.records.append(
                StepRecord(
                    step=step,
                    t=w.t,
                    pursuer=i,
                    x=p.x,
                    u=p.u,
                    v=v,
                    pi=pi,
                    region=decision.region,
                    h_u=h_u,
                    h_s=h_s,
                    h_c=h_c,
                    lambdas=sol.multipliers if sol is not None else np.zeros(len(rows)),
                    theta_hat=es.theta_hat,
                    xi_hat=es.xi_hat,
                    nu_bar=es.nu_bar,
                    eta_bar=es.eta_bar,
                    reward=reward(float(np.linalg.norm(ctx.zeta)), params.r, params.R),
                    kkt_stat=kkt.stationarity if kkt else 0.0,
                    kkt_comp=kkt.complementarity if kkt else 0.0,
                    kkt_dual=kkt.min_dual if kkt else 0.0,
                    relaxed=tuple(k.value for k in decision.relaxed),
                    rows=tuple(rows),
                    context=ctx if keep_context else None,
                )
            )
        try:
            w = integrate_step(w, np.array(controls), model, sc.dt, sc.method, plant, sc.target_law)
        except DivergedError as exc:
            raise SafetyFault(str(exc), w, -1) from exc
        log.worlds.append(w)
    log.wall_time = time.perf_counter() - start
    return log


def run(sc: Scenario, keep_context: bool = True) -> SimLog:
    """Closed loop with the safety filter: estimate, build rows, switch, integrate."""
    return _simulate(sc, True, keep_context)


def nominal_only_run(sc: Scenario, keep_context: bool = True) -> SimLog:
    """Same loop with the filter bypassed; violations are recorded, not raised."""
    return _simulate(sc, False, keep_context)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class PursuerMetrics:
    min_h_c: float
    min_h_s: float
    min_h_u: float
    violations: int
    mean_reward: float
    activation: float


@dataclass(frozen=True)
class Metrics:
    per_pursuer: tuple[PursuerMetrics, ...]
    violations: int
    final_violations: int
    activation: float
    relaxed_steps: int
    max_kkt: float
    max_recompute_error: float
    wall_time: float

    @property
    def min_h(self) -> float:
        return min(min(m.min_h_c, m.min_h_s, m.min_h_u) for m in self.per_pursuer)

    def summary(self) -> dict:
        return {
            "violations": self.violations,
            "final_violations": self.final_violations,
            "activation": self.activation,
            "relaxed_steps": self.relaxed_steps,
            "max_kkt": self.max_kkt,
            "max_recompute_error": self.max_recompute_error,
            "wall_time": self.wall_time,
            "pursuers": [
                {
                    "min_h_c": m.min_h_c,
                    "min_h_s": m.min_h_s,
                    "min_h_u": m.min_h_u,
                    "violations": m.violations,
                    "mean_reward": m.mean_reward,
                    "activation": m.activation,
                }
                for m in self.per_pursuer
            ],
        }


def world_barriers(w: WorldState, i: int, sc: Scenario):
    """``(h_u, h_s, h_c)`` of pursuer ``i`` recomputed from a world snapshot."""
    p = sc.safety
    me, tg = w.pursuers[i], w.targets[i]
    zeta = me.x - tg.p0
    h_c = []
    for j, other in enumerate(w.pursuers):
        if j != i:
            h_c.append(cbf.h_collision(me.x - other.x, p.r))
    for other in w.targets:
        h_c.append(cbf.h_collision(me.x - other.p0, p.r))
    for ob in w.obstacles:
        h_c.append(cbf.h_collision(me.x - ob.center, p.r + ob.radius))
    return cbf.h_input(zeta, me.u, p), cbf.h_sensing(zeta, p), np.array(h_c)


def metrics(log: SimLog) -> Metrics:
    if not log.records:
        raise ValueError("empty log")
    sc = log.scenario
    per = []
    recompute = 0.0
    for r in log.records:
        h_u, h_s, h_c = world_barriers(log.worlds[r.step], r.pursuer, sc)
        recompute = max(recompute, abs(h_u - r.h_u), abs(h_s - r.h_s), float(np.max(np.abs(h_c - r.h_c), initial=0.0)))
    for i in range(sc.n_pursuers):
        recs = log.for_pursuer(i)
        per.append(
            PursuerMetrics(
                min_h_c=min(r.h_c_min for r in recs),
                min_h_s=min(r.h_s for r in recs),
                min_h_u=min(r.h_u for r in recs),
                violations=sum(r.h_min < -VIOLATION_TOL for r in recs),
                mean_reward=float(np.mean([r.reward for r in recs])),
                activation=sum(r.region is Region.R2 for r in recs) / len(recs),
            )
        )
    final = log.worlds[-1]
    final_viol = 0
    for i in range(sc.n_pursuers):
        h_u, h_s, h_c = world_barriers(final, i, sc)
        final_viol += min(h_u, h_s, float(np.min(h_c, initial=np.inf))) < -VIOLATION_TOL
    return Metrics(
        per_pursuer=tuple(per),
        violations=sum(m.violations for m in per),
        final_violations=final_viol,
        activation=sum(r.region is Region.R2 for r in log.records) / len(log.records),
        relaxed_steps=sum(bool(r.relaxed) for r in log.records),
        max_kkt=max([max(r.kkt_stat, r.kkt_comp) for r in log.records] + [0.0]),
        max_recompute_error=recompute,
        wall_time=log.wall_time,
    )
