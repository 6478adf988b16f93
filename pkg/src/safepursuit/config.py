"""Scenario files: flat ``key = value`` text in dotted sections.

::

    [scenario]
    name = circle
    dt = 0.1

    [pursuers.0]
    x = 0.7, 5.0, 0.0
    u = 0.5, 0.0, 0.0
    policy = pd
    kp = 25.0

    [obstacles.0]
    center = 4.7, 3.25, 3.0
    radius = 0.3

Indexed sections (``pursuers.N``, ``targets.N``, ``obstacles.N``) must be
numbered from zero without gaps.  Vectors are comma separated; the rows of a
table (custom reference positions, recorded policy values) are separated by
``;``.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from pathlib import Path
from typing import Union

import numpy as np

from .cbf import SafetyParams
from .dynamics import (
    Circle,
    Custom,
    DisturbanceModel,
    FigureEight,
    Obstacle,
    PursuerState,
    TargetLaw,
    TargetState,
    reference_signal,
)
from .estimator import EstimatorConfig
from .policy import Constant, NominalPolicy, PdTracker, Recorded
from .sim import Scenario, ScenarioError


class ConfigError(ValueError):
    """A scenario file that cannot be turned into a Scenario."""


_INDEXED = ("pursuers", "targets", "obstacles")
_SINGLE = ("scenario", "safety", "estimator", "disturbance", "target_law")


# ---------------------------------------------------------------------------
# value formatting


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return value
    if isinstance(value, (tuple, list, np.ndarray)):
        if len(value) and isinstance(value[0], (tuple, list, np.ndarray)):
            return "; ".join(_fmt(row) for row in value)
        return ", ".join(_fmt(v) for v in value)
    raise TypeError(f"cannot write {value!r}")


class _Section:
    """Typed access to one section that names the offending key on error."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = parser[name] if parser.has_section(name) else {}
        self.used: set[str] = set()

    def _get(self, key, default):
        self.used.add(key)
        if key in self.raw:
            return self.raw[key]
        if default is _REQUIRED:
            raise ConfigError(f"[{self.name}] missing required field '{key}'")
        return None

    def _fail(self, key, text, what):
        return ConfigError(f"[{self.name}] {key} = {text!r}: expected {what}")

    def float(self, key, default=None):
        text = self._get(key, default)
        if text is None:
            return default
        try:
            return float(text)
        except ValueError:
            raise self._fail(key, text, "a number") from None

    def int(self, key, default=None):
        text = self._get(key, default)
        if text is None:
            return default
        try:
            return int(text)
        except ValueError:
            raise self._fail(key, text, "an integer") from None

    def bool(self, key, default=None):
        text = self._get(key, default)
        if text is None:
            return default
        low = text.strip().lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise self._fail(key, text, "true or false")

    def str(self, key, default=None):
        text = self._get(key, default)
        return default if text is None else text.strip()

    def vec(self, key, default=None):
        text = self._get(key, default)
        if text is None:
            return default
        try:
            return tuple(float(c) for c in text.split(",") if c.strip())
        except ValueError:
            raise self._fail(key, text, "comma separated numbers") from None

    def table(self, key, default=None):
        text = self._get(key, default)
        if text is None:
            return default
        try:
            return tuple(tuple(float(c) for c in row.split(",")) for row in text.split(";") if row.strip())
        except ValueError:
            raise self._fail(key, text, "rows of numbers separated by ';'") from None

    def check_unused(self):
        extra = sorted(set(self.raw) - self.used)
        if extra:
            raise ConfigError(f"[{self.name}] unknown field(s): {', '.join(extra)}")


_REQUIRED = object()


# ---------------------------------------------------------------------------
# dataclass sections


def _read_flat(sec: _Section, cls, base):
    """Override the fields of ``base`` (an instance of ``cls``) present in ``sec``."""
    kw = {}
    for f in dataclasses.fields(cls):
        current = getattr(base, f.name)
        if isinstance(current, bool):
            val = sec.bool(f.name)
        elif isinstance(current, int):
            val = sec.int(f.name)
        elif isinstance(current, float):
            val = sec.float(f.name)
        elif isinstance(current, str):
            val = sec.str(f.name)
        elif isinstance(current, tuple):
            val = sec.vec(f.name)
            if val is not None and len(val) != len(current):
                raise ConfigError(f"[{sec.name}] {f.name}: expected {len(current)} values, got {len(val)}")
        else:
            continue
        if val is not None:
            kw[f.name] = val
    try:
        return dataclasses.replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {exc}") from None


def _write_flat(obj) -> dict:
    return {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("_")}


# ---------------------------------------------------------------------------
# agents


def _read_reference(sec: _Section):
    kind = sec.str("reference", _REQUIRED)
    if kind == "circle":
        return Circle(
            sec.float("amplitude", _REQUIRED),
            sec.float("frequency", _REQUIRED),
            plane=tuple(int(v) for v in sec.vec("plane", (0.0, 1.0))),
            offset=sec.float("offset", 0.0),
            dim=sec.int("dim", 3),
        )
    if kind == "figure8":
        return FigureEight(
            sec.float("amplitude", _REQUIRED),
            sec.float("f1", _REQUIRED),
            sec.float("f2", _REQUIRED),
            offset=sec.float("offset", 0.0),
            plane=tuple(int(v) for v in sec.vec("plane", (0.0, 1.0))),
            dim=sec.int("dim", 3),
        )
    if kind == "custom":
        return Custom(sec.vec("times", _REQUIRED), sec.table("positions", _REQUIRED))
    raise ConfigError(f"[{sec.name}] reference = {kind!r}: expected circle, figure8 or custom")


def _write_reference(ref) -> dict:
    if isinstance(ref, Circle):
        return {
            "reference": "circle",
            "amplitude": _fmt(ref.amplitude),
            "frequency": _fmt(ref.frequency),
            "plane": _fmt(ref.plane),
            "offset": _fmt(ref.offset),
            "dim": _fmt(ref.dim),
        }
    if isinstance(ref, FigureEight):
        return {
            "reference": "figure8",
            "amplitude": _fmt(ref.amplitude),
            "f1": _fmt(ref.f1),
            "f2": _fmt(ref.f2),
            "offset": _fmt(ref.offset),
            "plane": _fmt(ref.plane),
            "dim": _fmt(ref.dim),
        }
    return {"reference": "custom", "times": _fmt(ref.times), "positions": _fmt(ref.positions)}


def _read_policy(sec: _Section) -> NominalPolicy:
    kind = sec.str("policy", "pd")
    if kind == "pd":
        default = PdTracker()
        k = PdTracker(sec.float("kp", default.kp), sec.float("kd", default.kd), sec.vec("standoff"))
    elif kind == "constant":
        k = Constant(sec.vec("value", _REQUIRED))
    elif kind == "recorded":
        path = sec.str("path")
        if path is not None:
            try:
                k = Recorded.from_csv(path)
            except OSError as exc:
                raise ConfigError(f"[{sec.name}] path = {path!r}: {exc.strerror}") from None
            except ValueError as exc:
                raise ConfigError(f"[{sec.name}] {exc}") from None
        else:
            k = Recorded(sec.vec("times", _REQUIRED), sec.table("values", _REQUIRED))
    else:
        raise ConfigError(f"[{sec.name}] policy = {kind!r}: expected pd, constant or recorded")
    try:
        return NominalPolicy(k, sec.float("clamp"))
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {exc}") from None


def _write_policy(pol: NominalPolicy) -> dict:
    k = pol.kind
    if isinstance(k, PdTracker):
        out = {"policy": "pd", "kp": _fmt(k.kp), "kd": _fmt(k.kd)}
        if k.standoff is not None:
            out["standoff"] = _fmt(k.standoff)
    elif isinstance(k, Constant):
        out = {"policy": "constant", "value": _fmt(k.value)}
    elif k.path is not None:
        out = {"policy": "recorded", "path": k.path}
    else:
        out = {"policy": "recorded", "times": _fmt(k.times), "values": _fmt(k.values)}
    if pol.clamp is not None:
        out["clamp"] = _fmt(pol.clamp)
    return out


def _indices(parser, prefix) -> list[int]:
    found = []
    for name in parser.sections():
        head, _, tail = name.partition(".")
        if head != prefix:
            continue
        if not tail.isdigit():
            raise ConfigError(f"[{name}]: expected a section name like [{prefix}.0]")
        found.append(int(tail))
    found.sort()
    if found != list(range(len(found))):
        raise ConfigError(f"[{prefix}.N] sections must be numbered 0..{len(found) - 1}, got {found}")
    return found


# ---------------------------------------------------------------------------
# public API


def parse(text: str, source: str = "<config>") -> Scenario:
    """Build a Scenario from config text; raises ConfigError naming the field."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for name in parser.sections():
        if name not in _SINGLE and name.partition(".")[0] not in _INDEXED:
            raise ConfigError(f"{source}: unknown section [{name}]")

    sections = []

    def section(name):
        s = _Section(parser, name)
        sections.append(s)
        return s

    head = section("scenario")
    safety = _read_flat(section("safety"), SafetyParams, SafetyParams())
    estimator = _read_flat(section("estimator"), EstimatorConfig, EstimatorConfig())
    law = _read_flat(section("target_law"), TargetLaw, TargetLaw())
    dsec = section("disturbance")
    try:
        disturbance = DisturbanceModel(
            theta=np.array(dsec.vec("theta", (1.0,))),
            xi=np.array(dsec.vec("xi", (1.0,))),
            kind=dsec.str("kind", "sinusoidal"),
        )
    except ValueError as exc:
        raise ConfigError(f"[disturbance] {exc}") from None

    targets = []
    for i in _indices(parser, "targets"):
        sec = section(f"targets.{i}")
        try:
            ref = _read_reference(sec)
            p, pd, _ = reference_signal(ref, 0.0)
        except ValueError as exc:
            raise ConfigError(f"[{sec.name}] {exc}") from None
        p = np.array(sec.vec("position", tuple(p)))
        pd = np.array(sec.vec("velocity", tuple(pd)))
        targets.append(TargetState(p, pd, ref))

    pursuers, policies = [], []
    for i in _indices(parser, "pursuers"):
        sec = section(f"pursuers.{i}")
        x = np.array(sec.vec("x", _REQUIRED))
        u = np.array(sec.vec("u", _REQUIRED))
        if x.shape != u.shape:
            raise ConfigError(f"[{sec.name}] x and u have different lengths")
        pursuers.append(PursuerState(x, u, i))
        policies.append(_read_policy(sec))

    obstacles = []
    for i in _indices(parser, "obstacles"):
        sec = section(f"obstacles.{i}")
        try:
            obstacles.append(Obstacle(np.array(sec.vec("center", _REQUIRED)), sec.float("radius", _REQUIRED)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[{sec.name}] {exc}") from None

    kw = dict(
        name=head.str("name", Path(source).stem),
        dt=head.float("dt", 0.1),
        steps=head.int("steps", 600),
        seed=head.int("seed", 0),
        initial_jitter=head.float("initial_jitter", 0.0),
        method=head.str("method", "euler"),
    )
    for s in sections:
        s.check_unused()
    try:
        return Scenario(
            pursuers=tuple(pursuers),
            targets=tuple(targets),
            obstacles=tuple(obstacles),
            safety=safety,
            estimator=estimator,
            disturbance=disturbance,
            policies=tuple(policies),
            target_law=law,
            **kw,
        )
    except ScenarioError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse(text, str(path))


def dump(sc: Scenario) -> str:
    """Config text for ``sc``; ``parse(dump(sc))`` rebuilds an equal scenario."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    parser["scenario"] = {
        "name": sc.name,
        "dt": _fmt(sc.dt),
        "steps": _fmt(sc.steps),
        "seed": _fmt(sc.seed),
        "initial_jitter": _fmt(sc.initial_jitter),
        "method": sc.method,
    }
    parser["safety"] = _write_flat(sc.safety)
    parser["estimator"] = _write_flat(sc.estimator)
    parser["disturbance"] = {
        "kind": sc.disturbance.kind,
        "theta": _fmt(sc.disturbance.theta),
        "xi": _fmt(sc.disturbance.xi),
    }
    parser["target_law"] = _write_flat(sc.target_law)
    for i, tg in enumerate(sc.targets):
        parser[f"targets.{i}"] = {
            **_write_reference(tg.reference),
            "position": _fmt(tg.p0),
            "velocity": _fmt(tg.p0_dot),
        }
    for i, (p, pol) in enumerate(zip(sc.pursuers, sc.policies)):
        parser[f"pursuers.{i}"] = {"x": _fmt(p.x), "u": _fmt(p.u), **_write_policy(pol)}
    for i, ob in enumerate(sc.obstacles):
        parser[f"obstacles.{i}"] = {"center": _fmt(ob.center), "radius": _fmt(ob.radius)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
