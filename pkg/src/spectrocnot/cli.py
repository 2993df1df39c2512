"""Command-line entry point.

    spectrocnot spectrum    --config configs/energy_levels.json --out levels.csv
    spectrocnot sensitivity --config configs/sensitivity_detuning.json --out sens.csv
    spectrocnot simulate    --config record.json --out sim.json
    spectrocnot optimize    --config configs/gate_45ns.json --t-gate-ns 45 --out record.json
    spectrocnot curve       --config configs/fidelity_curve.json --t-gate-list 33:51:2 --out curve.csv

Exit codes: 0 ok, 2 configuration, 3 numeric or labelling failure, 4 step-size
convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .fidelity import CNOT_TARGET, trace_fidelity
from .model import ConfigError, DeviceParams, basis_index, strict_keys
from .optimizer import (
    PARAM_NAMES, GateContext, OptimizationRecord, SearchSpace, default_space, fidelity_curve,
    optimize_gate,
)
from .propagator import StepTooCoarse, population_trace, propagate
from .pulses import GateSchedule, epsilon_of_t
from .spectrum import CURVE_LABELS, AssignmentAmbiguous, spectrum_curve, sweep_coupling, sweep_detuning

log = logging.getLogger("spectrocnot")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4

SENSITIVITY_HEADER = ("detuning_ghz", "coupling_ghz", "s_c_mhz", "s_l_mhz")
SPECTRUM_HEADER = ("epsilon_ghz",) + tuple(f"E{q}{r}" for q, r in CURVE_LABELS)
EPSILON_HEADER = ("t_ns", "epsilon_ghz")
POPULATION_HEADER = ("t_ns", "p00", "p01", "p10", "p11", "leak")
CURVE_HEADER = ("t_gate_ns", "t_ramp_ns", "g_mhz", "detuning_mhz", "fidelity_pct")


class NumericFailure(RuntimeError):
    pass


def _num(x) -> str:
    # shortest exact round-trip form of the double
    return repr(float(x))


def parse_grid(spec: Any, where: str) -> np.ndarray:
    """A grid is an explicit list or ``{"start", "stop", "num"}`` (inclusive)."""
    if isinstance(spec, Mapping):
        strict_keys(spec, {"start", "stop", "num"}, where=where)
        try:
            num = int(spec["num"])
            grid = np.linspace(float(spec["start"]), float(spec["stop"]), num)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if num < 1:
            raise ConfigError(f"{where}: num must be >= 1")
    elif isinstance(spec, (list, tuple)):
        try:
            grid = np.array([float(v) for v in spec])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    else:
        raise ConfigError(f"{where}: expected a list or a start/stop/num object")
    if grid.size == 0:
        raise ConfigError(f"{where}: grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ConfigError(f"{where}: grid values must be finite")
    return grid


def parse_time_list(text: str) -> list[float]:
    """``"33:51:2"`` (inclusive stop) or ``"33,45,51"``."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError("need start <= stop and a positive step")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"gate time list {text!r}: {exc}") from exc


def _floats(block: Mapping[str, Any], key: str, where: str, n: int | None = None) -> np.ndarray:
    try:
        arr = np.array([float(v) for v in block[key]])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from exc
    if n is not None and arr.shape != (n,):
        raise ConfigError(f"{where}.{key}: expected {n} values")
    return arr


@dataclass(frozen=True)
class RunConfig:
    """Parsed run file; every block is optional except ``device``."""

    device: DeviceParams
    raw: Mapping[str, Any]
    out: str | None = None
    dt_ns: float | None = None

    REQUIRED = frozenset({"device"})
    OPTIONAL = frozenset({"description", "spectrum", "sensitivity", "schedule", "simulate",
                          "search", "context", "curve", "out", "dt_ns", "result"})

    @classmethod
    def from_dict(cls, block: Mapping[str, Any]) -> "RunConfig":
        strict_keys(block, set(cls.REQUIRED), set(cls.OPTIONAL), where="config")
        device = DeviceParams.from_dict(block["device"])
        dt = block.get("dt_ns")
        if dt is not None:
            try:
                dt = float(dt)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config.dt_ns: {exc}") from exc
            if not dt > 0:
                raise ConfigError("config.dt_ns must be positive")
        out = block.get("out")
        return cls(device=device, raw=block, out=None if out is None else str(out), dt_ns=dt)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def block(self, name: str, required: bool = False) -> Mapping[str, Any]:
        if name not in self.raw:
            if required:
                raise ConfigError(f"config: missing key(s) ['{name}']")
            return {}
        value = self.raw[name]
        if not isinstance(value, Mapping):
            raise ConfigError(f"config.{name}: expected an object")
        return value

    def spectrum_grid(self) -> np.ndarray:
        blk = self.block("spectrum", required=True)
        strict_keys(blk, {"epsilon_grid_ghz"}, where="spectrum")
        return parse_grid(blk["epsilon_grid_ghz"], "spectrum.epsilon_grid_ghz")

    def sensitivity_sweep(self) -> tuple[str, np.ndarray, float]:
        blk = self.block("sensitivity", required=True)
        if "coupling_grid_ghz" in blk:
            strict_keys(blk, {"coupling_grid_ghz"}, {"detuning_ghz"}, where="sensitivity")
            try:
                det = float(blk.get("detuning_ghz", 0.215))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"sensitivity.detuning_ghz: {exc}") from exc
            return "coupling", parse_grid(blk["coupling_grid_ghz"], "sensitivity.coupling_grid_ghz"), det
        strict_keys(blk, {"detuning_grid_ghz"}, where="sensitivity")
        return "detuning", parse_grid(blk["detuning_grid_ghz"], "sensitivity.detuning_grid_ghz"), math.nan

    def schedule(self) -> GateSchedule:
        sched = GateSchedule.from_dict(self.block("schedule", required=True),
                                       delta_anh_ghz=self.device.delta)
        return sched if self.dt_ns is None else _with_dt(sched, self.dt_ns)

    def simulate_options(self) -> tuple[list[str], int, bool]:
        blk = self.block("simulate")
        strict_keys(blk, set(), {"populations", "stride", "check_convergence"}, where="simulate")
        pops = [str(p) for p in blk.get("populations", [])]
        for p in pops:
            if len(p) != 2 or not set(p) <= {"0", "1", "2"}:
                raise ConfigError(f"simulate.populations: bad basis label {p!r}")
        try:
            stride = int(blk.get("stride", 20))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"simulate.stride: {exc}") from exc
        if stride < 1:
            raise ConfigError("simulate.stride must be >= 1")
        return pops, stride, bool(blk.get("check_convergence", False))

    def context(self) -> GateContext:
        blk = self.block("context")
        keys = {"park_detuning_ghz": "park_detuning", "sigma_frac": "sigma_frac",
                "dt_search_ns": "dt_search", "dt_final_ns": "dt_final"}
        strict_keys(blk, set(), set(keys), where="context")
        try:
            kw = {attr: float(blk[key]) for key, attr in keys.items() if key in blk}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"context: {exc}") from exc
        if self.dt_ns is not None:
            kw["dt_search"] = kw["dt_final"] = self.dt_ns
        if any(not v > 0 for v in kw.values()):
            raise ConfigError("context: values must be positive")
        return GateContext.from_device(self.device, **kw)

    def search(self, budget: int | None, restarts: int | None, seed: int | None) -> SearchSpace:
        blk = self.block("search")
        strict_keys(blk, set(), {"lower", "upper", "x0", "budget", "restarts", "seed", "screen"},
                    where="search")
        n = len(PARAM_NAMES)
        try:
            space = default_space(self.device)
            changes: dict[str, Any] = {}
            for key in ("lower", "upper", "x0"):
                if key in blk:
                    changes[key] = _floats(blk, key, "search", n)
            if "screen" in blk:
                changes["screen"] = int(blk["screen"])
            for key, given in (("budget", budget), ("restarts", restarts), ("seed", seed)):
                value = given if given is not None else blk.get(key)
                if value is not None:
                    changes[key] = int(value)
            return space.with_(**changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"search: {exc}") from exc

    def curve_times(self) -> list[float] | None:
        blk = self.block("curve")
        strict_keys(blk, set(), {"t_gate_list_ns"}, where="curve")
        if "t_gate_list_ns" not in blk:
            return None
        value = blk["t_gate_list_ns"]
        if isinstance(value, str):
            return parse_time_list(value)
        return [float(v) for v in parse_grid(value, "curve.t_gate_list_ns")]


def _with_dt(sched: GateSchedule, dt: float) -> GateSchedule:
    try:
        return sched.with_(dt=dt)
    except ValueError as exc:
        raise ConfigError(f"--dt-ns {dt}: {exc}") from exc


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(v) for v in row])


def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _sibling(path: Path, suffix: str, ext: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{ext}")


def _out_path(args, cfg: RunConfig, default: str) -> Path:
    return Path(args.out or cfg.out or default)


def cmd_spectrum(cfg: RunConfig, args) -> int:
    grid = cfg.spectrum_grid()
    try:
        table = spectrum_curve(cfg.device, grid)
    except AssignmentAmbiguous as exc:
        raise NumericFailure(str(exc)) from exc
    out = _out_path(args, cfg, "spectrum.csv")
    _write_csv(out, SPECTRUM_HEADER, ([eps, *row] for eps, row in zip(grid, table)))
    print(f"wrote {len(grid)} rows to {out}")
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig, args) -> int:
    axis, grid, det = cfg.sensitivity_sweep()
    if axis == "coupling":
        rows = sweep_coupling(cfg.device, grid, detuning=det)
    else:
        rows = sweep_detuning(cfg.device, grid)
    bad = [r for r in rows if r.error is not None]
    if bad:
        raise NumericFailure(f"labelling failed at detuning={bad[0].detuning} GHz, "
                             f"g={bad[0].coupling} GHz: {bad[0].error}")
    out = _out_path(args, cfg, "sensitivity.csv")
    _write_csv(out, SENSITIVITY_HEADER,
               ((r.detuning, r.coupling, r.s_c * 1e3, r.s_l * 1e3) for r in rows))
    peak = max(rows, key=lambda r: r.s_c)
    print(f"wrote {len(rows)} rows to {out}; max S_c {peak.s_c * 1e3:.3f} MHz "
          f"at detuning {peak.detuning * 1e3:.1f} MHz, g {peak.coupling * 1e3:.1f} MHz")
    return EXIT_OK


def _complex_pairs(u: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in u]


def cmd_simulate(cfg: RunConfig, args) -> int:
    sched = cfg.schedule()
    pops, stride, check = cfg.simulate_options()
    check = check or args.check_convergence
    try:
        result = propagate(sched, cfg.device, check_convergence=check)
    except StepTooCoarse as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    fid = trace_fidelity(result.u_comp, CNOT_TARGET)
    out = _out_path(args, cfg, "simulate.json")
    _write_json(out, {
        "fidelity": fid,
        "unitarity_error": result.unitarity_error,
        "steps": result.steps,
        "u_comp": _complex_pairs(result.u_comp),
        "schedule": sched.to_dict(),
    })
    times = np.linspace(0.0, sched.t_gate, 2 * int(math.ceil(sched.t_gate)) + 1)
    _write_csv(_sibling(out, "epsilon", ".csv"), EPSILON_HEADER,
               zip(times, epsilon_of_t(sched, times)))
    for label in pops:
        rows = population_trace(sched, cfg.device, basis_index(int(label[0]), int(label[1])),
                                stride=stride)
        _write_csv(_sibling(out, f"populations_{label}", ".csv"), POPULATION_HEADER, rows)
    print(f"fidelity {100.0 * fid:.4f} %  (unitarity error {result.unitarity_error:.1e})")
    return EXIT_OK


def _record_payload(cfg: RunConfig, rec: OptimizationRecord, ctx: GateContext) -> dict:
    device = cfg.device.with_(epsilon=ctx.omega + float(rec.params[1]), g=float(rec.params[0]))
    payload = {"device": device.to_dict()}
    if rec.schedule is not None:
        payload["schedule"] = rec.schedule.to_dict()
    result = rec.to_dict()
    result.pop("schedule", None)
    result["fidelity_pct"] = 100.0 * rec.fidelity
    payload["result"] = result
    return payload


def cmd_optimize(cfg: RunConfig, args) -> int:
    if args.t_gate_ns is None:
        raise ConfigError("optimize: --t-gate-ns is required")
    ctx = cfg.context()
    space = cfg.search(args.budget, args.restarts, args.seed)
    rec = optimize_gate(float(args.t_gate_ns), space, ctx)
    if rec.error is not None:
        raise NumericFailure(rec.error)
    out = _out_path(args, cfg, "record.json")
    _write_json(out, _record_payload(cfg, rec, ctx))
    flag = "  (budget exhausted without improvement)" if rec.budget_exhausted else ""
    print(f"t_gate {rec.t_gate:g} ns: fidelity {100.0 * rec.fidelity:.4f} % after "
          f"{rec.evaluations} evaluations{flag}")
    return EXIT_OK


def cmd_curve(cfg: RunConfig, args) -> int:
    times = parse_time_list(args.t_gate_list) if args.t_gate_list else cfg.curve_times()
    if not times:
        raise ConfigError("curve: give --t-gate-list or curve.t_gate_list_ns")
    ctx = cfg.context()
    space = cfg.search(args.budget, args.restarts, args.seed)
    records = fidelity_curve(times, space, ctx, workers=max(1, args.threads))
    out = _out_path(args, cfg, "curve.csv")
    _write_csv(out, CURVE_HEADER, (
        (r.t_gate, r.params[4], 1e3 * r.params[0], 1e3 * r.params[1], 100.0 * r.fidelity)
        for r in records))
    _write_json(_sibling(out, "records", ".json"),
                {"records": [_record_payload(cfg, r, ctx) for r in records]})
    print(" t_gate  t_ramp   g(MHz)  eps-w(MHz)  fidelity(%)")
    for r in records:
        print(f"{r.t_gate:7g} {r.params[4]:7.3f} {1e3 * r.params[0]:8.3f} {1e3 * r.params[1]:10.3f}"
              f"  {100.0 * r.fidelity:10.4f}")
    failed = [r for r in records if r.error is not None]
    if failed:
        log.error("optimization failed at %s", ", ".join(f"{r.t_gate:g} ns" for r in failed))
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sensitivity": cmd_sensitivity,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "curve": cmd_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectrocnot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run file (JSON)")
        p.add_argument("--out", help="output path; overrides the config's out")
        p.add_argument("--dt-ns", type=float, help="integrator step override (ns)")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "simulate":
            p.add_argument("--check-convergence", action="store_true",
                           help="repeat at half step, exit 4 if u_comp moves by more than 1e-6")
        if name in ("optimize", "curve"):
            p.add_argument("--budget", type=int)
            p.add_argument("--restarts", type=int)
            p.add_argument("--seed", type=int)
        if name == "optimize":
            p.add_argument("--t-gate-ns", type=float)
        if name == "curve":
            p.add_argument("--t-gate-list", help="start:stop:step (inclusive) or comma list, ns")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.dt_ns is not None:
            if not args.dt_ns > 0:
                raise ConfigError("--dt-ns must be positive")
            cfg = replace(cfg, dt_ns=args.dt_ns)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericFailure, AssignmentAmbiguous, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
