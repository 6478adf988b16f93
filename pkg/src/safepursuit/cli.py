"""Command line front end.

    safepursuit run --preset circle --out ./out --format csv,json,svg
    safepursuit run --config scene.cfg --no-filter
    safepursuit validate scene.cfg
    safepursuit plot out/log.csv --out ./charts
    safepursuit dump-preset figure8 > scene.cfg

Exit codes: 0 success, 1 configuration or input error, 2 safety fault.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config, svg
from .sim import PRESETS, SafetyFault, Scenario, ScenarioError, SimLog, metrics, nominal_only_run, preset, run

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2
FORMATS = ("csv", "json", "svg")
OUT_ENV = "CBF_PURSUIT_OUT"


@dataclass(frozen=True)
class RunConfig:
    source: str  # preset name or config file path
    out: Path
    formats: tuple[str, ...] = ("csv",)
    filter: bool = True
    seed: Optional[int] = None
    dt: Optional[float] = None
    steps: Optional[int] = None
    is_preset: bool = True

    def __post_init__(self):
        if not self.formats:
            raise ValueError("at least one output format is required")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ValueError(f"unknown format(s) {', '.join(bad)}; choose from {', '.join(FORMATS)}")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def load_scenario(cfg: RunConfig) -> Scenario:
    if cfg.is_preset:
        sc = preset(cfg.source)
    else:
        sc = config.load(cfg.source)
    kw = {k: getattr(cfg, k) for k in ("seed", "dt", "steps") if getattr(cfg, k) is not None}
    return replace(sc, **kw) if kw else sc


# ---------------------------------------------------------------------------
# log output


def csv_header(log: SimLog) -> list[str]:
    sc = log.scenario
    n = sc.pursuers[0].x.shape[0]
    m = len(log.records[0].lambdas) if log.records else 0
    p, q = sc.disturbance.p, sc.disturbance.q
    head = ["t", "pursuer"]
    for name in ("x", "u", "v", "pi"):
        head += [f"{name}{k}" for k in range(1, n + 1)]
    head += ["region", "h_u", "h_s", "h_c_min"]
    head += [f"lambda{k}" for k in range(1, m + 1)]
    head += [f"theta_hat{k}" for k in range(1, p + 1)]
    head += ["xi_hat"] if q == 1 else [f"xi_hat{k}" for k in range(1, q + 1)]
    head += ["nu_bar", "eta_bar", "reward", "kkt_stat", "kkt_comp"]
    return head


def _num(v) -> str:
    return repr(float(v))


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def write_csv(log: SimLog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(log))
        for r in log.records:
            w.writerow(
                [_num(r.t), r.pursuer]
                + [_num(v) for arr in (r.x, r.u, r.v, r.pi) for v in arr]
                + [r.region.name] + [_num(v) for v in (r.h_u, r.h_s, r.h_c_min)]
                + [_num(v) for v in r.lambdas]
                + [_num(v) for v in r.theta_hat]
                + [_num(v) for v in r.xi_hat]
                + [_num(v) for v in (r.nu_bar, r.eta_bar, r.reward, r.kkt_stat, r.kkt_comp)]
            )


def read_log(path: Path) -> dict[int, dict[str, np.ndarray]]:
    """Columns of a log CSV grouped by pursuer; raises ValueError if malformed."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: log has no records")
    head = rows[0]
    need = ["t", "pursuer", "u1", "h_u", "h_s", "h_c_min"]
    missing = [c for c in need if c not in head]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    n = sum(1 for c in head if c.startswith("u") and c[1:].isdigit())
    cols = {c: i for i, c in enumerate(head)}
    groups: dict[int, list[list[str]]] = {}
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(head):
            raise ValueError(f"{path}:{lineno}: expected {len(head)} fields, got {len(row)}")
        groups.setdefault(int(row[cols["pursuer"]]), []).append(row)
    out = {}
    for i, recs in sorted(groups.items()):
        try:
            def col(name):
                return np.array([float(r[cols[name]]) for r in recs])

            out[i] = {
                "t": col("t"),
                "u": np.stack([col(f"u{k}") for k in range(1, n + 1)], axis=1),
                "h_u": col("h_u"),
                "h_s": col("h_s"),
                "h_c_min": col("h_c_min"),
            }
        except ValueError as exc:
            raise ValueError(f"{path}: pursuer {i}: {exc}") from None
    return out


def pursuer_charts(data: dict[int, dict[str, np.ndarray]], r: float, R: float) -> dict[str, svg.Chart]:
    """Three chart families per pursuer: speed vs kappa, distance vs r and R, barrier values."""
    charts = {}
    for i, d in data.items():
        t = d["t"]
        speed = np.linalg.norm(d["u"], axis=1)
        kap = np.sqrt(np.maximum(d["h_u"] + speed**2, 0.0))
        dist = np.sqrt(np.maximum(R * R - d["h_s"], 0.0))
        nearest = np.sqrt(np.maximum(d["h_c_min"] + r * r, 0.0))
        charts[f"pursuer{i}_input.svg"] = (
            svg.Chart(f"pursuer {i}: |u| and kappa", ylabel="speed").add("|u|", t, speed).add("kappa", t, kap, True)
        )
        charts[f"pursuer{i}_distance.svg"] = (
            svg.Chart(f"pursuer {i}: distances", ylabel="distance")
            .add("|x - q|", t, dist)
            .add("nearest agent", t, nearest, True)
            .hline(f"r = {r:g}", r)
            .hline(f"R = {R:g}", R)
        )
        charts[f"pursuer{i}_barriers.svg"] = (
            svg.Chart(f"pursuer {i}: barrier values", ylabel="h")
            .add("h_s", t, d["h_s"])
            .add("min h_c", t, d["h_c_min"])
            .hline("0", 0.0)
        )
    return charts


def overview_chart(log: SimLog) -> svg.Chart:
    ch = svg.Chart(f"{log.scenario.name}: barrier values", ylabel="h").hline("0", 0.0)
    for i in range(log.scenario.n_pursuers):
        recs = log.for_pursuer(i)
        t = [r.t for r in recs]
        ch.add(f"h_s {i}", t, [r.h_s for r in recs])
        ch.add(f"min h_c {i}", t, [r.h_c_min for r in recs], True)
    return ch


def write_outputs(log: SimLog, out: Path, formats: Sequence[str]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        write_csv(log, out / "log.csv")
        written.append(out / "log.csv")
    if "json" in formats:
        path = out / "metrics.json"
        body = {"scenario": log.scenario.name, "filtered": log.filtered, **metrics(log).summary()}
        path.write_text(json.dumps(body, indent=2, default=_plain) + "\n")
        written.append(path)
    if "svg" in formats:
        svg.write(overview_chart(log), out / "h_values.svg")
        written.append(out / "h_values.svg")
        p = log.scenario.safety
        data = {}
        for i in range(log.scenario.n_pursuers):
            recs = log.for_pursuer(i)
            data[i] = {
                "t": np.array([r.t for r in recs]),
                "u": np.stack([r.u for r in recs]),
                "h_u": np.array([r.h_u for r in recs]),
                "h_s": np.array([r.h_s for r in recs]),
                "h_c_min": np.array([r.h_c_min for r in recs]),
            }
        for name, ch in pursuer_charts(data, p.r, p.R).items():
            svg.write(ch, out / name)
            written.append(out / name)
    return written


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg: RunConfig) -> int:
    try:
        sc = load_scenario(cfg)
    except (ValueError, ScenarioError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        probe = cfg.out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        _err(f"output directory {cfg.out} is not writable: {exc.strerror}")
        return EXIT_CONFIG
    try:
        log = run(sc, keep_context=False) if cfg.filter else nominal_only_run(sc, keep_context=False)
    except SafetyFault as exc:
        _err("safety fault")
        print(exc.dump(), file=sys.stderr)
        return EXIT_FAULT
    write_outputs(log, cfg.out, cfg.formats)
    m = metrics(log)
    mode = "filtered" if cfg.filter else "nominal only"
    print(
        f"{sc.name} ({mode}): violations={m.violations} min_h={m.min_h:.6g} "
        f"activation={m.activation:.3f} relaxed_steps={m.relaxed_steps} "
        f"max_kkt={m.max_kkt:.3g} wall_time={m.wall_time:.3f}s -> {cfg.out}"
    )
    return EXIT_OK


def cmd_validate(path) -> int:
    try:
        sc = config.load(path)
    except config.ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(
        f"{path}: ok ({sc.name}: {sc.n_pursuers} pursuers, {len(sc.obstacles)} obstacles, "
        f"{sc.steps} steps of {sc.dt:g} s)"
    )
    return EXIT_OK


def cmd_plot(log_path, out, r: float = 0.5, R: float = 1.0) -> int:
    try:
        data = read_log(Path(log_path))
    except OSError as exc:
        _err(f"{log_path}: {exc.strerror}")
        return EXIT_CONFIG
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, ch in pursuer_charts(data, r, R).items():
            svg.write(ch, out / name)
    except OSError as exc:
        _err(f"cannot write charts to {out}: {exc.strerror}")
        return EXIT_CONFIG
    print(f"wrote {3 * len(data)} charts to {out}")
    return EXIT_OK


def cmd_dump_preset(name: str, out=None) -> int:
    try:
        text = config.dump(preset(name))
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="safepursuit", description="Safety-filtered multi-pursuer simulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a preset or scenario file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", nargs="+", metavar="NAME", help=f"one or more of: {', '.join(PRESETS)}")
    src.add_argument("--config", nargs="+", metavar="FILE", help="one or more scenario files")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    r.add_argument("--format", default="csv", help="comma separated subset of csv,json,svg")
    r.add_argument("--no-filter", action="store_true", help="apply the nominal action unfiltered")
    r.add_argument("--seed", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--steps", type=int)
    r.add_argument("--jobs", type=int, default=1, help="parallel runs when several scenarios are given")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("path")

    p = sub.add_parser("plot", help="render per-pursuer SVG charts from a log CSV")
    p.add_argument("log")
    p.add_argument("--out", default=".")
    p.add_argument("--r", type=float, default=0.5, help="collision radius reference line")
    p.add_argument("--R", type=float, default=1.0, help="sensing radius reference line")

    d = sub.add_parser("dump-preset", help="print a preset as a scenario file")
    d.add_argument("name")
    d.add_argument("--out")
    return ap


def _run_many(cfgs: list[RunConfig], jobs: int) -> int:
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(cmd_run, cfgs))
    else:
        codes = [cmd_run(c) for c in cfgs]
    # a fault outranks a configuration error
    return EXIT_FAULT if EXIT_FAULT in codes else max(codes)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.path)
    if args.command == "plot":
        return cmd_plot(args.log, args.out, args.r, args.R)
    if args.command == "dump-preset":
        return cmd_dump_preset(args.name, args.out)

    if args.jobs < 1:
        _err("--jobs must be at least 1")
        return EXIT_CONFIG
    base = Path(args.out or os.environ.get(OUT_ENV) or "out")
    sources = args.preset or args.config
    is_preset = args.preset is not None
    cfgs = []
    for src in sources:
        out = base if len(sources) == 1 else base / (src if is_preset else Path(src).stem)
        try:
            cfgs.append(
                RunConfig(
                    src,
                    out,
                    tuple(f.strip() for f in args.format.split(",") if f.strip()),
                    not args.no_filter,
                    args.seed,
                    args.dt,
                    args.steps,
                    is_preset,
                )
            )
        except ValueError as exc:
            _err(str(exc))
            return EXIT_CONFIG
    return _run_many(cfgs, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
