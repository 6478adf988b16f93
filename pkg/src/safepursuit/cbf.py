"""Barrier functions and robust linear-in-``v`` safety constraints.

Three families of barriers act on one pursuer:

* input:      ``h_u = kappa(zeta)**2 - |u|**2``           (relative degree 1 in v)
* sensing:    ``h_s = R**2 - |zeta|**2``                   (relative degree 2)
* collision:  ``h_c = |x - p_k|**2 - r_k**2``  per neighbour (relative degree 2)

Each is turned into a row ``a @ v >= b``.  Derivatives are exact; every
uncertain quantity is split into a mean part evaluated with the current
estimates and a worst-case part scaled by the certified bounds ``nu_bar``,
``eta_bar`` and the neighbour bounds ``rho_v``, ``rho_a``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import SINGLE_INTEGRATOR, DisturbanceModel, Plant, SingularityError


@dataclass(frozen=True)
class SafetyParams:
    r: float = 0.5
    R: float = 1.0
    kappa_c: float = 2.0
    kappa_ell: float = 1.0
    kappa_eps: float = 0.1
    alpha0: float = 1.0
    iota: float = 1.0
    iota_t: float = 1.0
    rho_v: float = 1.5
    rho_a: float = 0.5
    # keep a certified lower bound of the non-negative 2|e_dot|**2 part of a
    # collision h_ddot instead of dropping it
    keep_relative_speed: bool = False
    # the second-order rows hold h - h_margin instead of h at zero, leaving room
    # for what a sampled, piecewise-constant control loses between steps
    h_margin: float = 0.0

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise ValueError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        for name in ("kappa_c", "kappa_ell", "kappa_eps", "alpha0", "iota", "iota_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho_v < 0 or self.rho_a < 0:
            raise ValueError("rho_v and rho_a must be non-negative")
        if self.h_margin < 0:
            raise ValueError("h_margin must be non-negative")


class RowKind(enum.Enum):
    INPUT = "input"
    SENSING = "sensing"
    COLLISION = "collision"


@dataclass(frozen=True)
class ConstraintRow:
    a: np.ndarray
    b: float
    kind: RowKind
    k: Optional[int] = None
    h_value: float = 0.0
    hbar_value: float = 0.0

    def slack(self, v) -> float:
        return float(self.a @ v - self.b)

    def scaled(self, s: float) -> "ConstraintRow":
        if not s > 0:
            raise ValueError("rows may only be scaled by a positive factor")
        return ConstraintRow(self.a * s, self.b * s, self.kind, self.k, self.h_value, self.hbar_value)

    @property
    def label(self) -> str:
        return self.kind.value if self.k is None else f"{self.kind.value}{self.k}"


@dataclass(frozen=True)
class Neighbor:
    """Another agent as seen by one pursuer.  ``radius`` is the keep-out radius.

    ``velocity`` is the mean velocity; when the neighbour is itself disturbed
    by ``Y_nb theta`` with the same unknown ``theta``, ``Y`` holds ``Y_nb`` so the
    uncertainty of the relative velocity is ``(Y - Y_nb) theta_err``.

    ``accel_bound`` overrides ``rho_a`` for this neighbour (``0`` for static
    obstacles).  ``share`` is the fraction of the pairwise condition this
    pursuer enforces; two pursuers that both filter split it ``0.5/0.5``.
    """

    position: np.ndarray
    velocity: np.ndarray
    radius: float
    label: str = ""
    Y: Optional[np.ndarray] = None
    accel_bound: Optional[float] = None
    share: float = 1.0

    def __post_init__(self):
        if not 0 < self.share <= 1:
            raise ValueError("share must lie in (0, 1]")


@dataclass(frozen=True)
class ConstraintContext:
    """Per-pursuer snapshot from which all rows of one step are built.

    The raw inputs are kept alongside the derived quantities so that a
    context can be rebuilt at interpolated states.
    """

    x: np.ndarray
    u: np.ndarray
    target_position: np.ndarray
    target_velocity: np.ndarray
    neighbors: tuple[Neighbor, ...]
    theta_hat: np.ndarray
    xi_hat: np.ndarray
    nu_bar: float
    eta_bar: float
    # derived
    zeta: np.ndarray
    zeta_dot: np.ndarray
    x_dot: np.ndarray
    kappas: np.ndarray
    kappa_dots: np.ndarray
    kappa_Ys: np.ndarray
    radii: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    Y_dot: np.ndarray
    g: np.ndarray
    drift_rate: np.ndarray
    y_rate_gain: float


def make_context(
    x,
    u,
    target_position,
    target_velocity,
    neighbors: Sequence[Neighbor],
    theta_hat,
    xi_hat,
    nu_bar: float,
    eta_bar: float,
    model: DisturbanceModel,
    plant: Plant = SINGLE_INTEGRATOR,
) -> ConstraintContext:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q = np.asarray(target_position, dtype=float)
    q_dot = np.asarray(target_velocity, dtype=float)
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    xi_hat = np.atleast_1d(np.asarray(xi_hat, dtype=float))
    Y = model.Y(x)
    g = plant.g(x)
    x_dot = plant.f(x) + g @ u + Y @ theta_hat
    neighbors = tuple(neighbors)
    n = x.shape[0]
    if neighbors:
        pos = np.stack([nb.position for nb in neighbors])
        vel = np.stack([nb.velocity for nb in neighbors])
        radii = np.array([nb.radius for nb in neighbors], dtype=float)
        kYs = np.stack([Y if nb.Y is None else Y - nb.Y for nb in neighbors])
    else:
        pos = vel = np.zeros((0, n))
        radii = np.zeros(0)
        kYs = np.zeros((0,) + Y.shape)
    kappas = x - pos
    if kappas.size and np.min(np.einsum("ij,ij->i", kappas, kappas)) <= 0:
        raise SingularityError("pursuer coincides with a neighbour")
    return ConstraintContext(
        x=x,
        u=u,
        target_position=q,
        target_velocity=q_dot,
        neighbors=neighbors,
        theta_hat=theta_hat,
        xi_hat=xi_hat,
        nu_bar=float(nu_bar),
        eta_bar=float(eta_bar),
        zeta=x - q,
        zeta_dot=x_dot - q_dot,
        x_dot=x_dot,
        kappas=kappas,
        kappa_dots=x_dot - vel,
        kappa_Ys=kYs,
        radii=radii,
        Y=Y,
        Z=model.Z(x),
        Y_dot=model.Y_dot(x, x_dot),
        g=g,
        drift_rate=plant.f_dot(x, x_dot) + plant.g_dot(x, x_dot) @ u,
        y_rate_gain=model.y_rate_gain,
    )


# ---------------------------------------------------------------------------
# barrier values and gradients


def kappa(zeta, p: SafetyParams) -> float:
    zeta = np.asarray(zeta, dtype=float)
    s = zeta @ zeta - p.kappa_ell**2
    return p.kappa_c + 1.0 / (s * s + p.kappa_eps)


def kappa_sq_gradient(zeta, p: SafetyParams) -> np.ndarray:
    """Gradient of ``kappa(zeta)**2`` with respect to ``zeta``."""
    zeta = np.asarray(zeta, dtype=float)
    s = zeta @ zeta - p.kappa_ell**2
    den = s * s + p.kappa_eps
    return -8.0 * kappa(zeta, p) * s * zeta / (den * den)


def h_input(zeta, u, p: SafetyParams) -> float:
    u = np.asarray(u, dtype=float)
    return kappa(zeta, p) ** 2 - u @ u


def h_input_gradient(zeta, u, p: SafetyParams):
    """``(d h_u / d zeta, d h_u / d u)``."""
    return kappa_sq_gradient(zeta, p), -2.0 * np.asarray(u, dtype=float)


def h_sensing(zeta, p: SafetyParams) -> float:
    zeta = np.asarray(zeta, dtype=float)
    return p.R**2 - zeta @ zeta


def h_sensing_gradient(zeta, p: SafetyParams) -> np.ndarray:
    return -2.0 * np.asarray(zeta, dtype=float)


def h_collision(kappa_k, radius: float) -> float:
    kappa_k = np.asarray(kappa_k, dtype=float)
    return kappa_k @ kappa_k - radius**2


def h_collision_gradient(kappa_k) -> np.ndarray:
    return 2.0 * np.asarray(kappa_k, dtype=float)


def barrier_values(ctx: ConstraintContext, p: SafetyParams):
    """``(h_u, h_s, h_c)`` with ``h_c`` one entry per neighbour."""
    h_c = np.einsum("ij,ij->i", ctx.kappas, ctx.kappas) - ctx.radii**2
    return h_input(ctx.zeta, ctx.u, p), h_sensing(ctx.zeta, p), h_c


def hocbf_chain(h: float, h_dot: float, h_ddot: float, gain: float, alpha0: float):
    """First two members of the chain ``hbar1 = h``, ``hbar2 = h_dot + alpha0 h``.

    ``gain`` and ``h_ddot`` enter only the condition value :func:`hocbf_condition`.
    """
    return h, h_dot + alpha0 * h


def hocbf_condition(h: float, h_dot: float, h_ddot: float, gain: float, alpha0: float) -> float:
    """``h_ddot + gain * h_dot + alpha0 * h``; the rows keep this non-negative."""
    return h_ddot + gain * h_dot + alpha0 * h


# ---------------------------------------------------------------------------
# exact rates, used by the rows and by the finite-difference checks


def second_order_rates(e, e_dot, e_ddot):
    """``(d/dt, d2/dt2)`` of ``|e|**2`` for a relative vector ``e``."""
    return 2.0 * e @ e_dot, 2.0 * e_dot @ e_dot + 2.0 * e @ e_ddot


def input_rate(zeta, zeta_dot, u, u_dot, p: SafetyParams) -> float:
    return kappa_sq_gradient(zeta, p) @ zeta_dot - 2.0 * u @ u_dot


# ---------------------------------------------------------------------------
# rows


def _norm(v) -> float:
    # Frobenius for matrices; np.linalg.norm is several times slower here
    return math.sqrt(float(np.vdot(v, v)))


def input_row(ctx: ConstraintContext, p: SafetyParams) -> ConstraintRow:
    """``d/dt h_u + alpha0 h_u >= 0`` with ``d/dt h_u = w.zeta_dot - 2 u.(v + Z xi)``."""
    w = kappa_sq_gradient(ctx.zeta, p)
    h = h_input(ctx.zeta, ctx.u, p)
    uZ = ctx.u @ ctx.Z
    lower = (
        w @ ctx.zeta_dot
        - _norm(w) * (_norm(ctx.Y) * ctx.nu_bar + p.rho_v)
        - 2.0 * uZ @ ctx.xi_hat
        - 2.0 * _norm(uZ) * ctx.eta_bar
    )
    return ConstraintRow(
        a=-2.0 * ctx.u,
        b=-(lower + p.alpha0 * h),
        kind=RowKind.INPUT,
        h_value=h,
        hbar_value=h,
    )


def _relative_degree_two(
    e, e_dot, e_Y, sign: float, ctx: ConstraintContext, p: SafetyParams, gain: float, accel_bound: float, share: float = 1.0
):
    """Coefficient ``a`` and a v-free lower bound ``L`` such that ``a @ v + L``
    bounds ``sign * (h_ddot + gain*h_dot)`` from below, for ``h = sign*|e|**2 + const``.

    ``e`` moves with the pursuer and against a neighbour whose velocity is
    known and whose acceleration is bounded by ``accel_bound``; ``e_Y`` is the
    regressor of the unknown part of ``e_dot``.  The ``2 sign |e_dot|**2`` part
    of ``h_ddot`` is bounded from below when negative; when non-negative it is
    dropped unless ``keep_relative_speed`` is set.

    With ``share < 1`` the pursuer only takes that fraction of the terms that
    do not involve its own acceleration; the neighbour is expected to enforce
    the rest with its own row.
    """
    ge = ctx.g.T @ e
    eYd = e @ ctx.Y_dot
    eY = e @ e_Y
    geZ = ge @ ctx.Z
    ne = _norm(e)
    ny = _norm(ctx.Y)
    theta_mag = _norm(ctx.theta_hat) + ctx.nu_bar
    own = 2.0 * sign * (e @ ctx.drift_rate + geZ @ ctx.xi_hat + eYd @ ctx.theta_hat) - (
        2.0 * _norm(geZ) * ctx.eta_bar
        + 2.0 * _norm(eYd) * ctx.nu_bar
        # Y_dot is evaluated at the estimated velocity; the unknown part of
        # the velocity is at most |Y| nu_bar
        + 2.0 * ne * ctx.y_rate_gain * ny * ctx.nu_bar * theta_mag
    )
    shared = gain * (2.0 * sign * (e @ e_dot) - 2.0 * _norm(eY) * ctx.nu_bar) - 2.0 * ne * accel_bound
    speed_err = _norm(e_Y) * ctx.nu_bar
    if sign < 0:
        shared -= 2.0 * (_norm(e_dot) + speed_err) ** 2
    elif p.keep_relative_speed:
        shared += 2.0 * max(0.0, _norm(e_dot) - speed_err) ** 2
    return 2.0 * sign * ge, own, shared


def collision_row(ctx: ConstraintContext, k: int, p: SafetyParams) -> ConstraintRow:
    e = ctx.kappas[k]
    if _norm(e) <= 0:
        raise SingularityError(f"pursuer coincides with neighbour {k}")
    nb = ctx.neighbors[k]
    rho = p.rho_a if nb.accel_bound is None else nb.accel_bound
    h = h_collision(e, ctx.radii[k])
    a, own, shared = _relative_degree_two(e, ctx.kappa_dots[k], ctx.kappa_Ys[k], 1.0, ctx, p, p.iota, rho)
    h_dot = 2.0 * e @ ctx.kappa_dots[k]
    return ConstraintRow(
        a=a,
        b=-(own + nb.share * (shared + p.alpha0 * (h - p.h_margin))),
        kind=RowKind.COLLISION,
        k=k,
        h_value=h,
        hbar_value=hocbf_chain(h, h_dot, 0.0, p.iota, p.alpha0)[1],
    )


def sensing_row(ctx: ConstraintContext, p: SafetyParams) -> ConstraintRow:
    h = h_sensing(ctx.zeta, p)
    a, own, shared = _relative_degree_two(ctx.zeta, ctx.zeta_dot, ctx.Y, -1.0, ctx, p, p.iota_t, p.rho_a)
    h_dot = -2.0 * ctx.zeta @ ctx.zeta_dot
    return ConstraintRow(
        a=a,
        b=-(own + shared + p.alpha0 * (h - p.h_margin)),
        kind=RowKind.SENSING,
        h_value=h,
        hbar_value=hocbf_chain(h, h_dot, 0.0, p.iota_t, p.alpha0)[1],
    )


def collision_rows(ctx: ConstraintContext, p: SafetyParams) -> list[ConstraintRow]:
    """All collision rows at once; the same arithmetic as :func:`collision_row`
    applied along the neighbour axis."""
    E, Ed, EY = ctx.kappas, ctx.kappa_dots, ctx.kappa_Ys
    if E.shape[0] == 0:
        return []
    ne2 = np.einsum("kn,kn->k", E, E)
    if np.min(ne2) <= 0:
        raise SingularityError("pursuer coincides with a neighbour")
    ne = np.sqrt(ne2)
    ge = E @ ctx.g
    eYd = E @ ctx.Y_dot
    eY = np.einsum("kn,knp->kp", E, EY)
    geZ = ge @ ctx.Z
    ny = _norm(ctx.Y)
    theta_mag = _norm(ctx.theta_hat) + ctx.nu_bar
    own = 2.0 * (E @ ctx.drift_rate + geZ @ ctx.xi_hat + eYd @ ctx.theta_hat) - (
        2.0 * np.sqrt(np.einsum("kq,kq->k", geZ, geZ)) * ctx.eta_bar
        + 2.0 * np.sqrt(np.einsum("kp,kp->k", eYd, eYd)) * ctx.nu_bar
        + 2.0 * ne * ctx.y_rate_gain * ny * ctx.nu_bar * theta_mag
    )
    e_edot = np.einsum("kn,kn->k", E, Ed)
    rho = np.array([p.rho_a if nb.accel_bound is None else nb.accel_bound for nb in ctx.neighbors])
    share = np.array([nb.share for nb in ctx.neighbors])
    shared = p.iota * (2.0 * e_edot - 2.0 * np.sqrt(np.einsum("kp,kp->k", eY, eY)) * ctx.nu_bar) - 2.0 * ne * rho
    if p.keep_relative_speed:
        speed_err = np.sqrt(np.einsum("knp,knp->k", EY, EY)) * ctx.nu_bar
        rel = np.maximum(0.0, np.sqrt(np.einsum("kn,kn->k", Ed, Ed)) - speed_err)
        shared = shared + 2.0 * rel**2
    h = ne2 - ctx.radii**2
    b = -(own + share * (shared + p.alpha0 * (h - p.h_margin)))
    hbar = 2.0 * e_edot + p.alpha0 * h
    return [
        ConstraintRow(2.0 * ge[k], float(b[k]), RowKind.COLLISION, k, float(h[k]), float(hbar[k]))
        for k in range(E.shape[0])
    ]


def build_rows(ctx: ConstraintContext, p: SafetyParams) -> list[ConstraintRow]:
    """Rows in the fixed order input, sensing, collision 0..K-1."""
    return [input_row(ctx, p), sensing_row(ctx, p)] + collision_rows(ctx, p)
