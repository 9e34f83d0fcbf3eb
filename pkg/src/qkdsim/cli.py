"""Command-line front end.

Configuration comes from an optional flat ``key=value`` file (``#`` starts a
comment) overridden by ``--key value`` flags::

    qkdsim qber --variant qutrit --d 8 --m 5 --length_km 300
    qkdsim sweep --config upconv.cfg --start_km 0 --stop_km 800 --step_km 10 --out sweep.csv
    qkdsim maxdist --variant tf --d 8 --m 5 --eta 0.275 --dark_p 1.36e-6
    qkdsim mc --variant qubit --d 2 --m 2 --trials 1000000 --seed 7
    qkdsim validate
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .montecarlo import McConfig, mc_estimate
from .oracle import group_outcome_enum, group_specs, qber_oracle
from .protocol import (
    ChannelSpec,
    DetectorSpec,
    Scenario,
    Variant,
    qubit_group_probs,
    qutrit_single_probs,
    tf_single_probs,
    transmittance,
    validate_config,
)
from .rates import Path, qber_paper_sums, whole_detective_efficiency, whole_measurement_error
from .sweep import SweepSpec, ThresholdUnreachableError, distance_sweep, max_distance, rate_report

log = logging.getLogger("qkdsim")

SUBCOMMANDS = ("qber", "sweep", "maxdist", "mc", "validate")
SWEEP_HEADER = ("distance_km", "transmittance", "qber", "sift_rate", "error_rate")

# key -> (parser, default)
KEYS = {
    "variant": (str, "qubit"),
    "d": (int, 0),
    "m": (int, 1),
    "eta": (float, 0.59),
    "dark_p": (float, 4.6e-4),
    "p_opt": (float, 0.0),
    "alpha": (float, 0.2),
    "length_km": (float, 0.0),
    "threshold": (float, 0.11),
    "trials": (int, 100_000),
    "seed": (int, 0),
    "path": (str, "paper-sums"),
    "out": (str, None),
    "format": (str, None),
    "start_km": (float, 0.0),
    "stop_km": (float, 1000.0),
    "step_km": (float, 10.0),
    "stratified": (str, "true"),
}

VARIANTS = {"qubit": Variant.qubit, "qutrit": Variant.qutrit, "tf": Variant.twin_field}


class ConfigError(ValueError):
    def __init__(self, kind: str, message: str, line: int | None = None):
        super().__init__(message)
        self.kind = kind
        self.line = line

    def to_dict(self) -> dict:
        out = {"error": self.kind, "message": str(self)}
        if self.line is not None:
            out["line"] = self.line
        return out


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    variant: Variant
    detector: DetectorSpec
    channel: ChannelSpec
    threshold: float
    mc: McConfig
    path: Path
    out: str | None
    format: str
    sweep: SweepSpec | None = None
    warnings: tuple[str, ...] = field(default=())


def read_config_file(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("parse-error", f"expected key=value, got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError("parse-error", f"unknown key {key!r}", lineno)
        if not value:
            raise ConfigError("parse-error", f"empty value for {key!r}", lineno)
        values[key] = value
    return values


def _convert(key: str, raw):
    kind = KEYS[key][0]
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError("parse-error", f"{key}={raw!r} is not a valid {kind.__name__}") from None


def _bool(key: str, raw: str) -> bool:
    low = str(raw).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError("parse-error", f"{key}={raw!r} is not a boolean")


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Build a validated RunConfig; flags override config-file values."""
    ns = build_parser().parse_args(argv)
    values: dict[str, str] = {}
    if ns.config:
        try:
            text = FsPath(ns.config).read_text()
        except OSError as exc:
            raise ConfigError("parse-error", f"cannot read config file: {exc}") from None
        values.update(read_config_file(text))
    for key in KEYS:
        flag = getattr(ns, key, None)
        if flag is not None:
            values[key] = flag
    merged = {key: (_convert(key, values[key]) if key in values else default) for key, (_, default) in KEYS.items()}
    return _build(ns.subcommand, merged)


def _build(subcommand: str, v: dict) -> RunConfig:
    if v["variant"] not in VARIANTS:
        raise ConfigError("invariant-violation", f"variant={v['variant']!r} not in {sorted(VARIANTS)}")
    if v["path"] not in ("paper-sums", "approx", "oracle"):
        raise ConfigError("invariant-violation", f"path={v['path']!r} not in ['approx', 'oracle', 'paper-sums']")
    fmt = v["format"] or ("csv" if subcommand == "sweep" else "json")
    if fmt not in ("csv", "json"):
        raise ConfigError("invariant-violation", f"format={fmt!r} not in ['csv', 'json']")
    if not 0.0 < v["threshold"] < 0.5:
        raise ConfigError("invariant-violation", f"threshold={v['threshold']!r} outside (0, 0.5)")
    try:
        variant = VARIANTS[v["variant"]](v["d"], v["m"])
        det = DetectorSpec(v["eta"], v["dark_p"], v["p_opt"])
        channel = ChannelSpec(v["alpha"], v["length_km"])
        mc = McConfig(v["trials"], v["seed"], _bool("stratified", v["stratified"]))
        sweep = None
        if subcommand == "sweep":
            sweep = SweepSpec(
                variant, det, v["alpha"], v["start_km"], v["stop_km"], v["step_km"], v["threshold"], Path(v["path"])
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("invariant-violation", str(exc)) from None
    warnings = tuple(validate_config(variant, det).warnings(variant))
    return RunConfig(subcommand, variant, det, channel, v["threshold"], mc, Path(v["path"]), v["out"], fmt, sweep, warnings)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdsim", description="Copy-group SPD scheme: QBER, distances, Monte Carlo.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file")
        for key in KEYS:
            # Strings here; conversion happens after merging with the file.
            p.add_argument(f"--{key}", default=None)
    return parser


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_qber(cfg: RunConfig) -> int:
    t = transmittance(cfg.channel)
    rep = rate_report(cfg.variant, cfg.detector, t, cfg.path)
    payload = {
        "variant": cfg.variant.kind.value,
        "d": cfg.variant.d,
        "m": cfg.variant.m,
        "length_km": cfg.channel.length_km,
        "transmittance": t,
        "report": rep.to_dict(),
        "whole_measurement_error": whole_measurement_error(cfg.variant.d, cfg.variant.m, cfg.detector.p_opt),
        "whole_detective_efficiency": whole_detective_efficiency(cfg.variant.d, cfg.variant.m, cfg.detector.eta),
    }
    if cfg.format == "json":
        _emit(cfg, _json_text(payload))
    else:
        _emit(cfg, _csv_text(("sift_rate", "error_rate", "qber", "path"), [(rep.sift_rate, rep.error_rate, rep.qber, rep.path.value)]))
    return 0


def _cmd_sweep(cfg: RunConfig) -> int:
    result = distance_sweep(cfg.sweep)
    rows = [(r.distance_km, r.transmittance, r.qber, r.sift_rate, r.error_rate) for r in result.rows]
    if cfg.format == "csv":
        _emit(cfg, _csv_text(SWEEP_HEADER, rows))
    else:
        _emit(cfg, _json_text({"rows": [dict(zip(SWEEP_HEADER, r)) for r in rows], "skipped": result.skipped}))
    return 0


def _cmd_maxdist(cfg: RunConfig) -> int:
    dist = max_distance(cfg.variant, cfg.detector, cfg.channel.alpha, cfg.threshold, cfg.path)
    if cfg.format == "json":
        _emit(cfg, _json_text({"max_distance_km": dist, "threshold": cfg.threshold, "path": cfg.path.value}))
    else:
        _emit(cfg, _csv_text(("max_distance_km", "threshold", "path"), [(dist, cfg.threshold, cfg.path.value)]))
    return 0


def _cmd_mc(cfg: RunConfig) -> int:
    est = mc_estimate(cfg.variant, cfg.detector, transmittance(cfg.channel), cfg.mc)
    if cfg.format == "json":
        _emit(cfg, _json_text(est.to_dict()))
    else:
        r = est.report
        _emit(
            cfg,
            _csv_text(
                ("sift_rate", "error_rate", "qber", "se_sift", "se_error", "se_qber", "degenerate"),
                [(r.sift_rate, r.error_rate, r.qber, est.se_sift, est.se_error, est.se_qber, est.degenerate)],
            ),
        )
    return 0


# Built-in validation grid.
_VALIDATE_VARIANTS = (
    Variant.qubit(0, 1),
    Variant.qubit(2, 2),
    Variant.qubit(4, 3),
    Variant.qutrit(0, 1),
    Variant.qutrit(4, 3),
    Variant.qutrit(8, 5),
    Variant.twin_field(0, 1),
    Variant.twin_field(8, 5),
)
_VALIDATE_DETECTORS = (DetectorSpec(0.275, 1.36e-6), DetectorSpec(0.59, 4.6e-4), DetectorSpec(0.9, 1e-5))
_VALIDATE_T = (1.0, 1e-2, 1e-6, 1e-20)
MC_DESK_DETECTOR = DetectorSpec(0.5, 0.05)
MC_DESK_VARIANTS = (Variant.qubit(2, 2), Variant.qutrit(4, 3), Variant.twin_field(4, 3))


def _closed_form_groups(det: DetectorSpec):
    """(label, closed form, enumerated) for every group type."""
    qut = Variant.qutrit(1, 1)
    qub = Variant.qubit(1, 1)
    tf = Variant.twin_field(0, 1)
    hit, dark = tf_single_probs(det)
    pairs = [
        ("qutrit/transmitted", qutrit_single_probs(det, "transmitted"), group_specs(qut, Scenario.TRANSMITTED)[0]),
        ("qutrit/empty", qutrit_single_probs(det, "empty"), group_specs(qut, Scenario.LOST)[0]),
        ("qutrit/lost", qutrit_single_probs(det, "lost"), group_specs(qut, Scenario.LOST)[1]),
        ("qubit/singleton/transmitted", qubit_group_probs(det, "singleton", "transmitted"), group_specs(qub, Scenario.TRANSMITTED)[0]),
        ("qubit/singleton/lost", qubit_group_probs(det, "singleton", "lost"), group_specs(qub, Scenario.LOST)[0]),
        ("qubit/pair/transmitted", qubit_group_probs(det, "pair", "transmitted"), group_specs(qub, Scenario.TRANSMITTED)[1]),
        ("qubit/pair/lost", qubit_group_probs(det, "pair", "lost"), group_specs(qub, Scenario.LOST)[1]),
    ]
    out = [(label, closed.as_tuple(), group_outcome_enum(spec, det).as_tuple()) for label, closed, spec in pairs]
    right = group_outcome_enum(group_specs(tf, Scenario.INTERFERED)[0], det)
    wrong = group_outcome_enum(group_specs(tf, Scenario.INTERFERED)[1], det)
    out.append(("tf/right", (hit, 0.0, 1.0 - hit), right.as_tuple()))
    out.append(("tf/wrong", (0.0, dark, 1.0 - dark), wrong.as_tuple()))
    return out


def run_validation(mc_trials: int = 200_000, seed: int = 2024) -> list[tuple[str, bool, str]]:
    """Executable conjunction of the cross-path agreement checks."""
    checks = []
    worst = 0.0
    for det in _VALIDATE_DETECTORS:
        for label, closed, enum_ in _closed_form_groups(det):
            worst = max(worst, max(abs(a - b) for a, b in zip(closed, enum_)))
    checks.append(("group enumeration vs closed forms (abs <= 1e-14)", worst <= 1e-14, f"max abs diff {worst:.3e}"))

    worst = 0.0
    for variant in _VALIDATE_VARIANTS:
        for det in _VALIDATE_DETECTORS:
            for t in _VALIDATE_T:
                a = qber_paper_sums(variant, det, t).qber
                b = qber_oracle(variant, det, t).qber
                worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    checks.append(("paper-sums vs oracle qber (rel <= 1e-10)", worst <= 1e-10, f"max rel diff {worst:.3e}"))

    t = transmittance(ChannelSpec(0.2, 50.0))
    for variant in MC_DESK_VARIANTS:
        est = mc_estimate(variant, MC_DESK_DETECTOR, t, McConfig(mc_trials, seed))
        ref = qber_oracle(variant, MC_DESK_DETECTOR, t).qber
        z = abs(est.report.qber - ref) / est.se_qber if est.se_qber else math.inf
        checks.append((f"monte carlo vs oracle, {variant} (|z| <= 4)", z <= 4.0, f"z = {z:.2f}"))
    return checks


def _cmd_validate(cfg: RunConfig) -> int:
    checks = run_validation(seed=cfg.mc.seed or 2024)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


_COMMANDS = {
    "qber": _cmd_qber,
    "sweep": _cmd_sweep,
    "maxdist": _cmd_maxdist,
    "mc": _cmd_mc,
    "validate": _cmd_validate,
}


def run(cfg: RunConfig) -> int:
    for msg in cfg.warnings:
        log.warning(msg)
    return _COMMANDS[cfg.subcommand](cfg)


def _fail(kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return 2


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="qkdsim: %(levelname)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 2
    try:
        return run(cfg)
    except ThresholdUnreachableError as exc:
        return _fail("threshold-unreachable", str(exc))
    except (ValueError, RuntimeError, OSError) as exc:
        return _fail("operation-failed", str(exc))


if __name__ == "__main__":
    sys.exit(main())
