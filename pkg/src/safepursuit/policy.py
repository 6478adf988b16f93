"""Nominal controllers and the tracking reward."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .dynamics import PursuerState, TargetState


@dataclass(frozen=True)
class PdTracker:
    """PD on the target; ``standoff`` shifts the tracked point to ``q + standoff``."""

    kp: float = 1.0
    kd: float = 2.0
    standoff: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class Constant:
    value: tuple[float, ...]


@dataclass(frozen=True)
class Recorded:
    """Piecewise-constant replay of a table; the sample nearest in time is used."""

    times: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]
    path: Optional[str] = None

    def __post_init__(self):
        if not self.times or len(self.times) != len(self.values):
            raise ValueError("recorded policy needs matching, non-empty time and value columns")
        if any(t1 < t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("recorded policy times must be sorted")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Recorded":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if not header or header[0] != "t" or any(h != f"v{i}" for i, h in enumerate(header[1:], 1)):
                raise ValueError(f"{path}: expected header t,v1,...,vn, got {','.join(header)}")
            times, values = [], []
            for line in reader:
                if not line:
                    continue
                times.append(float(line[0]))
                values.append(tuple(float(c) for c in line[1:]))
        return cls(tuple(times), tuple(values), str(path))

    def at(self, t: float) -> np.ndarray:
        times = np.asarray(self.times)
        i = int(np.searchsorted(times, t))
        if i == len(times) or (i > 0 and t - times[i - 1] <= times[i] - t):
            i -= 1
        return np.asarray(self.values[i], dtype=float)


PolicyKind = Union[PdTracker, Constant, Recorded]


@dataclass(frozen=True)
class NominalPolicy:
    kind: PolicyKind = PdTracker()
    clamp: Optional[float] = None

    def __post_init__(self):
        if self.clamp is not None and self.clamp < 0:
            raise ValueError("clamp must be non-negative")


def nominal_action(pol: NominalPolicy, s: PursuerState, tg: TargetState, t: float = 0.0) -> np.ndarray:
    k = pol.kind
    if isinstance(k, PdTracker):
        goal = tg.p0 if k.standoff is None else tg.p0 + np.asarray(k.standoff, dtype=float)
        out = k.kp * (goal - s.x) + k.kd * (tg.p0_dot - s.u)
    elif isinstance(k, Constant):
        out = np.asarray(k.value, dtype=float)
    else:
        out = k.at(t)
    if out.shape != s.x.shape:
        raise ValueError(f"policy output has shape {out.shape}, pursuer has {s.x.shape}")
    if pol.clamp is not None:
        norm = float(np.linalg.norm(out))
        if norm > pol.clamp:
            out = out * (pol.clamp / norm)
    if not np.all(np.isfinite(out)):
        raise ValueError("policy produced a non-finite action")
    return out


def reward(zeta_norm: float, r: float, R: float) -> float:
    """0.1 inside the band ``[r, R]``, a linear penalty on the distance to it outside."""
    if zeta_norm < 0:
        raise ValueError("distance must be non-negative")
    if zeta_norm < r:
        return -0.1 * abs(zeta_norm - r)
    if zeta_norm > R:
        return -0.1 * abs(zeta_norm - R)
    return 0.1
