"""Command-line scenario runner and verification driver.

Subcommands::

    velaid run <config.json> [--out DIR]
    velaid verify <suite> [--samples N] [--seed S] [--dt D] [--report PATH]
    velaid poles [--gains k1v,k2v,k1r,k2r] [--mi x,y,z] [--g G]

Exit codes: ``run`` returns 0 on success, 2 for an invalid config
(diagnostic names the offending field), 3 on numerical failure (a
non-finite state; the offending timestep is logged). ``verify`` returns
0 iff every property passed, 1 otherwise. Reports are plain text on
stdout; exit codes are the only machine contract.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, verify
from .observers import DEFAULT_M_I, ObserverGains
from .simworld import (
    InitialErrors,
    NumericalDivergence,
    OBSERVER_KINDS,
    SensorConfig,
    TrajectorySpec,
    gains_from_dict,
    gains_to_dict,
    run_scenario,
)
from .so3 import rotation_defect, rotation_from_euler
from .trace import write_traceset

__all__ = ["ConfigError", "ScenarioConfig", "bundled_config_path", "main"]

CONFIG_VERSION = "1"

_DEG2RAD = math.pi / 180.0


class ConfigError(ValueError):
    """Invalid scenario config; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


@dataclass
class ScenarioConfig:
    """Parsed scenario file; serializes back to the exact same dict."""

    scenario: str
    trajectory: TrajectorySpec
    sensors: SensorConfig
    gains: ObserverGains
    observers: tuple[str, ...]
    duration: float
    dt: float
    init: dict
    m_I: tuple[float, float, float]
    out_dir: str = "traces"
    spec_version: str = CONFIG_VERSION

    def initial_errors(self) -> InitialErrors:
        return _parse_init(self.init)

    def to_dict(self) -> dict:
        return {
            "spec_version": self.spec_version,
            "scenario": self.scenario,
            "trajectory": self.trajectory.to_dict(),
            "sensors": self.sensors.to_dict(),
            "gains": gains_to_dict(self.gains),
            "observers": list(self.observers),
            "duration": self.duration,
            "dt": self.dt,
            "init": self.init,
            "m_I": list(self.m_I),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        for key in ("spec_version", "scenario", "gains", "duration", "dt", "init"):
            if key not in d:
                raise ConfigError(key, "missing required field")
        if str(d["spec_version"]) != CONFIG_VERSION:
            raise ConfigError(
                "spec_version", f"unsupported version {d['spec_version']!r}"
            )

        def section(key, parser, default):
            raw = d.get(key)
            if raw is None:
                return default
            try:
                return parser(raw)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from exc

        trajectory = section("trajectory", TrajectorySpec.from_dict, TrajectorySpec())
        sensors = section("sensors", SensorConfig.from_dict, SensorConfig())
        gains = section("gains", gains_from_dict, None)
        observers = tuple(d.get("observers", ["obs1", "obs2"]))
        for kind in observers:
            if kind not in OBSERVER_KINDS:
                raise ConfigError("observers", f"unknown observer kind {kind!r}")
        if not observers:
            raise ConfigError("observers", "at least one observer required")

        duration = _number(d, "duration", minimum=0.0)
        dt = _number(d, "dt", strict_min=0.0)
        init = d["init"]
        _parse_init(init)  # validate now so cmd_run fails before integrating

        m_I = d.get("m_I", [float(x) for x in DEFAULT_M_I])
        try:
            m_I = tuple(float(x) for x in m_I)
        except (TypeError, ValueError) as exc:
            raise ConfigError("m_I", "expected a 3-vector") from exc
        if len(m_I) != 3 or not all(math.isfinite(x) for x in m_I):
            raise ConfigError("m_I", "expected a finite 3-vector")
        if math.hypot(m_I[0], m_I[1]) < 1e-9 * max(1.0, abs(m_I[2])):
            raise ConfigError("m_I", "field collinear with gravity (heading unobservable)")

        if not gains.all_positive:
            raise ConfigError("gains", "all four gains must be positive")

        return cls(
            scenario=str(d.get("scenario", "scenario")),
            trajectory=trajectory,
            sensors=sensors,
            gains=gains,
            observers=observers,
            duration=duration,
            dt=dt,
            init=init,
            m_I=m_I,
            out_dir=str(d.get("out_dir", "traces")),
            spec_version=str(d["spec_version"]),
        )


def _number(d: dict, key: str, minimum=None, strict_min=None) -> float:
    try:
        x = float(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, "expected a number") from exc
    if not math.isfinite(x):
        raise ConfigError(key, "must be finite")
    if minimum is not None and x < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    if strict_min is not None and x <= strict_min:
        raise ConfigError(key, f"must be > {strict_min}")
    return x


def _parse_init(init: dict) -> InitialErrors:
    if not isinstance(init, dict):
        raise ConfigError("init", "expected an object")
    has_vt, has_vb = "v_tilde" in init, "v_bar" in init
    if has_vt == has_vb:
        raise ConfigError("init", "give exactly one of v_tilde / v_bar")
    key = "v_tilde" if has_vt else "v_bar"
    try:
        v = np.array([float(x) for x in init[key]])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"init.{key}", "expected a 3-vector") from exc
    if v.shape != (3,):
        raise ConfigError(f"init.{key}", "expected a 3-vector")

    if ("R_bar" in init) == ("R_bar_euler_deg" in init):
        raise ConfigError("init", "give exactly one of R_bar / R_bar_euler_deg")
    if "R_bar" in init:
        try:
            R = np.array(init["R_bar"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError("init.R_bar", "expected a 3x3 matrix") from exc
        if R.shape != (3, 3):
            raise ConfigError("init.R_bar", "expected a 3x3 matrix")
        if rotation_defect(R) > 1e-6 or np.linalg.det(R) < 0.0:
            raise ConfigError("init.R_bar", "not a rotation matrix")
    else:
        e = init["R_bar_euler_deg"]
        try:
            roll, pitch, yaw = (float(x) * _DEG2RAD for x in e)
        except (TypeError, ValueError) as exc:
            raise ConfigError("init.R_bar_euler_deg", "expected [roll, pitch, yaw] deg") from exc
        R = rotation_from_euler(roll, pitch, yaw)

    if has_vt:
        return InitialErrors(R_bar=R, v_tilde=v)
    return InitialErrors(R_bar=R, v_bar=v)


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {p}: {exc}") from exc
    return ScenarioConfig.from_dict(raw)


def bundled_config_path(name: str) -> Path:
    """Filesystem path of a bundled scenario config (``sim1`` or ``sim2``)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("velaid").joinpath("configs", name)))


# ---------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out if args.out else cfg.out_dir
    try:
        ts = run_scenario(
            cfg.trajectory,
            cfg.sensors,
            cfg.gains,
            observers=cfg.observers,
            duration=cfg.duration,
            dt=cfg.dt,
            init=cfg.initial_errors(),
            m_I=np.array(cfg.m_I),
            config_echo=cfg.to_dict(),
        )
    except NumericalDivergence as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    paths = write_traceset(ts, out_dir, cfg.scenario)
    for p in paths:
        print(p)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    report = verify.run_suites(names, samples=args.samples, seed=args.seed, dt=args.dt)
    for suite in report["suites"]:
        for check in suite["checks"]:
            status = "PASS" if check["passed"] else "FAIL"
            print(f"{status}  {suite['suite']}.{check['name']}: {check['detail']}")
        status = "PASS" if suite["passed"] else "FAIL"
        print(f"{status}  suite {suite['suite']}")
    print(("PASS" if report["passed"] else "FAIL") + "  overall")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    return 0 if report["passed"] else 1


def cmd_poles(args: argparse.Namespace) -> int:
    if args.gains:
        try:
            k1v, k2v, k1r, k2r = (float(x) for x in args.gains.split(","))
        except ValueError:
            print("error: --gains expects k1v,k2v,k1r,k2r", file=sys.stderr)
            return 2
        gains = ObserverGains(k1v=k1v, k2v=k2v, k1r=k1r, k2r=k2r, g=args.g)
    else:
        gains = verify.paper_gains(g=args.g)
    if args.mi:
        try:
            m_I = np.array([float(x) for x in args.mi.split(",")])
            if m_I.shape != (3,):
                raise ValueError
        except ValueError:
            print("error: --mi expects x,y,z", file=sys.stderr)
            return 2
    else:
        m_I = DEFAULT_M_I

    rep = analysis.linearized_poles(gains, m_I)
    margin = gains.gain_condition_margin
    print(f"gains: k1v={gains.k1v} k2v={gains.k2v} k1r={gains.k1r} k2r={gains.k2r} g={gains.g}")
    print(
        f"gain condition k1r <= k1v*k2v/g: "
        f"{'satisfied' if gains.satisfies_gain_condition else 'VIOLATED'} "
        f"(margin {margin:.6g})"
    )
    print(f"discriminant: {rep.discriminant:.6g} (sign {rep.discriminant_sign})")
    p0, p1 = rep.pair_poles
    tag = " (double)" if rep.pair_is_double else ""
    print(f"roll/pitch pair poles (x2 axes): {p0:.9g}, {p1:.9g}{tag}")
    print(f"vertical velocity pole: {rep.vertical_pole:.9g}")
    print(
        f"heading pole: {rep.yaw_pole:.6g} (squared-projection convention), "
        f"{rep.yaw_pole_unsquared_convention:.6g} (unsquared convention)"
    )
    print(f"heading pole at reversed-heading equilibrium: +{rep.yaw_pole_undesired:.6g}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="velaid",
        description="velocity-aided attitude observer scenario runner and verifier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config, write CSV traces")
    p_run.add_argument("config", help="path to a scenario JSON config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run property verification suites")
    p_ver.add_argument("suite", choices=sorted(verify.SUITES) + ["all"])
    p_ver.add_argument("--samples", type=int, default=None)
    p_ver.add_argument("--seed", type=int, default=None)
    p_ver.add_argument("--dt", type=float, default=None)
    p_ver.add_argument("--report", default=None, help="write the JSON report here")
    p_ver.set_defaults(func=cmd_verify)

    p_pol = sub.add_parser("poles", help="print the linearization pole table")
    p_pol.add_argument("--gains", default=None, help="k1v,k2v,k1r,k2r")
    p_pol.add_argument("--mi", default=None, help="inertial field direction x,y,z")
    p_pol.add_argument("--g", type=float, default=9.81)
    p_pol.set_defaults(func=cmd_poles)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
