"""Experiment driver: Monte Carlo loops, one-axis parameter sweeps, CSV/JSON
reports and the command-line interface.

Velocity maps to Doppler as f_d = 2*v/lambda.  Reports are reproducible:
identical config and seed give byte-identical CSV apart from the timestamp
comment line.  ``SENSE_THREADS`` caps trial-level parallelism (default 1);
per-trial RNG streams are derived from (seed, trial) so ordering never
matters.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .analysis import crb_doppler_approx, export_curves, mainlobe_width, pattern_report
from .crb import crb_doppler_exact
from .errors import (
    ClosedFormMismatch,
    DegenerateStatics,
    GratingLobes,
    NonPositiveDenominator,
    OutOfDomain,
    PreconditionWarning,
    RegimeUndefined,
    ScheduleFormatError,
    SingularUpdate,
    ZeroDenominator,
)
from .mle import EstimatorOptions, MLEstimator
from .scenario import ChannelScenario, aggregate_statics, load_scenario, power_ratios
from .schedule import SymbolSchedule, load_schedule, save_schedule
from .sim import csi_ratio, generate_csi, random_offsets
from .waveform import OptimizerConfig, noise_limited_schedule, optimize_interference_limited

SWEEP_AXES = ("r_sn_db", "theta_d_deg", "velocity_mps", "r_sd_db", "k_over_kall", "k_f")
CSV_HEADER = ["axis", "crb_exact_hz2", "crb_approx_hz2", "rmse_mle_hz", "bias_hz", "trials"]


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("SENSE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MonteCarloResult:
    rmse_hz: float
    bias_hz: float
    per_trial: np.ndarray
    n_nonconverged: int


def run_monte_carlo(
    scenario: ChannelScenario,
    schedule: SymbolSchedule,
    trials: int,
    seed: int,
    opts: EstimatorOptions | None = None,
    apply_clock_offsets: bool = True,
) -> MonteCarloResult:
    """Simulate, ratio, estimate; RMSE/bias of the Doppler estimate over trials.

    Trial t draws its CSI noise from the stream keyed (seed, t, 0) and its
    clock offsets from (seed, t, 1), so trials are independent and any
    execution order produces identical per-trial results.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if opts is None:
        opts = EstimatorOptions(wavelength=scenario.wavelength, spacing=scenario.spacing)
    estimator = MLEstimator(schedule, opts)

    def one_trial(t: int) -> tuple[float, bool]:
        offsets = random_offsets(schedule, (seed, t, 1)) if apply_clock_offsets else None
        y0, y1 = generate_csi(scenario, schedule, offsets=offsets, seed=(seed, t, 0))
        result = estimator.estimate(csi_ratio(y0, y1))
        return result.alpha_hat.f_d, result.converged

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one_trial, range(trials)))
    else:
        outcomes = [one_trial(t) for t in range(trials)]

    per_trial = np.array([f for f, _ in outcomes])
    n_nonconverged = sum(1 for _, ok in outcomes if not ok)
    err = per_trial - scenario.f_d
    return MonteCarloResult(
        rmse_hz=float(np.sqrt(np.mean(err**2))),
        bias_hz=float(np.mean(err)),
        per_trial=per_trial,
        n_nonconverged=n_nonconverged,
    )


@dataclass(frozen=True)
class ScheduleSpec:
    """How to build the sensing schedule: prop3, alg1(k_f, f_ex), file, or random."""

    kind: str = "prop3"  # prop3 | alg1 | file | random
    k_f: int = 16
    f_ex_hz: float | None = None
    path: str | None = None
    seed: int = 0

    def build(self, k_all: int, K: int, t0: float) -> SymbolSchedule:
        if self.kind == "prop3":
            return noise_limited_schedule(k_all, K, t0)
        if self.kind == "alg1":
            f_ex = self.f_ex_hz
            if f_ex is None:
                # default: half-power width of the full-aperture half schedule
                f_ex = 0.44 / (((k_all - 1) // 2) * t0)
            config = OptimizerConfig(t0=t0, f_d_mainlobe_ex=f_ex)
            return optimize_interference_limited(k_all, K, self.k_f, config).schedule
        if self.kind == "file":
            if not self.path:
                raise ValueError("schedule file path required")
            return load_schedule(self.path)
        if self.kind == "random":
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
            phi = np.sort(rng.choice(k_all, size=K, replace=False))
            return SymbolSchedule(phi=tuple(int(p) for p in phi), k_all=k_all, t0=t0)
        raise ValueError(f"unknown schedule kind {self.kind!r}")


@dataclass
class SweepConfig:
    """One swept axis, everything else held at the base scenario."""

    scenario_base: ChannelScenario
    t0: float
    sweep_axis: str
    axis_values: tuple[float, ...]
    schedule_spec: ScheduleSpec = field(default_factory=ScheduleSpec)
    k_all: int = 512
    K: int = 128
    trials: int = 500
    seed: int = 0
    run_mle: bool = True
    mle_opts: EstimatorOptions | None = None

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if not self.axis_values:
            raise ValueError("axis_values must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        self.axis_values = tuple(float(v) for v in self.axis_values)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    crb_exact: float
    crb_approx: float
    rmse_mle: float
    bias: float
    n_trials: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    metadata: dict


def _apply_axis(config: SweepConfig, value: float):
    """Scenario/schedule for one axis point; exactly one quantity varies."""
    base = config.scenario_base
    schedule = None
    if config.sweep_axis == "r_sn_db":
        agg = aggregate_statics(base)
        p_static = 0.5 * (abs(agg.h0) ** 2 + abs(agg.h1) ** 2)
        scenario = base.replace(sigma_n2=p_static / 10.0 ** (value / 10.0))
    elif config.sweep_axis == "theta_d_deg":
        scenario = base.replace(theta_d=math.radians(value))
    elif config.sweep_axis == "velocity_mps":
        scenario = base.replace(f_d=2.0 * value / base.wavelength)
    elif config.sweep_axis == "r_sd_db":
        agg = aggregate_statics(base)
        p_static = 0.5 * (abs(agg.h0) ** 2 + abs(agg.h1) ** 2)
        target = math.sqrt(p_static / 10.0 ** (value / 10.0))
        phase = cmath.phase(base.xi_d) if base.xi_d != 0 else 0.0
        scenario = base.replace(xi_d=target * cmath.exp(1j * phase))
    elif config.sweep_axis == "k_over_kall":
        k = max(2, int(round(value * config.k_all)))
        k -= k % 2
        scenario = base
        schedule = config.schedule_spec.build(config.k_all, k, config.t0)
    elif config.sweep_axis == "k_f":
        spec = ScheduleSpec(
            kind="alg1",
            k_f=int(round(value)),
            f_ex_hz=config.schedule_spec.f_ex_hz,
        )
        scenario = base
        schedule = spec.build(config.k_all, config.K, config.t0)
    else:
        raise ValueError(config.sweep_axis)
    if schedule is None:
        schedule = config.schedule_spec.build(config.k_all, config.K, config.t0)
    return scenario, schedule


def sweep(config: SweepConfig) -> SweepReport:
    """Vary one axis, compute exact/approximated bounds and (optionally) MLE RMSE."""
    started = time.time()
    rows: list[SweepRow] = []
    errors: dict[str, str] = {}
    base_schedule = config.schedule_spec.build(config.k_all, config.K, config.t0)
    for value in config.axis_values:
        try:
            scenario, schedule = _apply_axis(config, value)
            exact = crb_doppler_exact(scenario, schedule).crb_fd
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PreconditionWarning)
                approx = crb_doppler_approx(scenario, schedule)
            if config.run_mle:
                mc = run_monte_carlo(scenario, schedule, config.trials, config.seed, config.mle_opts)
                rmse, bias, n_tr = mc.rmse_hz, mc.bias_hz, config.trials
            else:
                rmse, bias, n_tr = math.nan, math.nan, 0
            rows.append(SweepRow(value, exact, approx, rmse, bias, n_tr))
        except Exception as exc:  # noqa: BLE001 - per-row failures recorded, sweep continues
            errors[f"{value:.17g}"] = f"{type(exc).__name__}: {exc}"
            rows.append(SweepRow(value, math.nan, math.nan, math.nan, math.nan, 0))
    metadata = {
        "toolkit_version": __version__,
        "sweep_axis": config.sweep_axis,
        "axis_values": list(config.axis_values),
        "k_all": config.k_all,
        "K": config.K,
        "K_schedule_base": base_schedule.K,
        "t0_s": config.t0,
        "trials": config.trials,
        "seed": config.seed,
        "run_mle": config.run_mle,
        "schedule_spec": asdict(config.schedule_spec),
        "scenario": {
            "wavelength_m": config.scenario_base.wavelength,
            "spacing_m": config.scenario_base.spacing,
            "theta_d_deg": math.degrees(config.scenario_base.theta_d),
            "f_d_hz": config.scenario_base.f_d,
            "sigma_n2": config.scenario_base.sigma_n2,
            "xi_d": [config.scenario_base.xi_d.real, config.scenario_base.xi_d.imag],
            "static_paths": [
                [g.real, g.imag, a] for g, a in config.scenario_base.static_paths
            ],
        },
        "doppler_convention": "f_d = 2*v/lambda",
        "row_errors": errors,
        "wall_time_s": time.time() - started,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    return SweepReport(rows=rows, metadata=metadata)


def export(report: SweepReport, path, fmt: str = "csv") -> None:
    """Write a sweep report; CSV keeps metadata in '#' comments, JSON verbatim.

    Numbers are written with 17 significant digits so a re-import round-trips
    exactly.
    """
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            for key in ("toolkit_version", "sweep_axis", "t0_s", "trials", "seed", "doppler_convention"):
                fh.write(f"# {key}={report.metadata.get(key)}\n")
            fh.write(f"# timestamp={report.metadata.get('timestamp')}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in report.rows:
                writer.writerow(
                    [
                        f"{row.axis_value:.17g}",
                        f"{row.crb_exact:.17g}",
                        f"{row.crb_approx:.17g}",
                        f"{row.rmse_mle:.17g}",
                        f"{row.bias:.17g}",
                        str(row.n_trials),
                    ]
                )
    elif fmt == "json":
        payload = {
            "metadata": report.metadata,
            "rows": [
                {
                    "axis": row.axis_value,
                    "crb_exact_hz2": row.crb_exact,
                    "crb_approx_hz2": row.crb_approx,
                    "rmse_mle_hz": row.rmse_mle,
                    "bias_hz": row.bias,
                    "trials": row.n_trials,
                }
                for row in report.rows
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_report(path) -> SweepReport:
    """Re-read a report written by :func:`export` (format from the content)."""
    text = open(path).read()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        rows = [
            SweepRow(
                axis_value=r["axis"],
                crb_exact=r["crb_exact_hz2"],
                crb_approx=r["crb_approx_hz2"],
                rmse_mle=r["rmse_mle_hz"],
                bias=r["bias_hz"],
                n_trials=r["trials"],
            )
            for r in payload["rows"]
        ]
        return SweepReport(rows=rows, metadata=payload["metadata"])
    metadata: dict = {}
    rows = []
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            metadata[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    for rec in reader:
        rows.append(
            SweepRow(
                axis_value=float(rec[0]),
                crb_exact=float(rec[1]),
                crb_approx=float(rec[2]),
                rmse_mle=float(rec[3]),
                bias=float(rec[4]),
                n_trials=int(rec[5]),
            )
        )
    return SweepReport(rows=rows, metadata=metadata)


# ---------------------------------------------------------------------------
# command line interface


CONFIG_ERRORS = (
    ValueError,
    KeyError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    ScheduleFormatError,
)
NUMERICAL_ERRORS = (
    DegenerateStatics,
    ZeroDenominator,
    GratingLobes,
    NonPositiveDenominator,
    RegimeUndefined,
    OutOfDomain,
    SingularUpdate,
    ClosedFormMismatch,
    np.linalg.LinAlgError,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csiratio",
        description="CSI-ratio Doppler sensing: bounds, patterns, schedule design, Monte Carlo",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
        p.add_argument("--schedule", default="prop3", help="prop3 | alg1 | path to schedule file")
        p.add_argument("--k-all", type=int, default=512, dest="k_all")
        p.add_argument("--k", type=int, default=128, dest="k")
        p.add_argument("--kf", type=int, default=16, dest="k_f")
        p.add_argument("--f-ex", type=float, default=None, dest="f_ex", help="expected mainlobe bound in Hz (alg1)")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=500)

    p_crb = sub.add_parser("crb", help="pattern/envelope/CRB curves over Doppler")
    common(p_crb)
    p_crb.add_argument("--points", type=int, default=2048, help="Doppler grid size")

    p_pat = sub.add_parser("pattern", help="Doppler pattern, envelope and mainlobe width")
    common(p_pat, scenario_required=False)
    p_pat.add_argument("--t0", type=float, default=None, help="symbol interval when no scenario file")
    p_pat.add_argument("--points", type=int, default=2048)

    p_opt = sub.add_parser("optimize", help="design a schedule and write it as text")
    common(p_opt, scenario_required=False)
    p_opt.add_argument("--t0", type=float, default=None)

    p_mc = sub.add_parser("montecarlo", help="MLE RMSE/bias against the bound")
    common(p_mc)

    p_sw = sub.add_parser("sweep", help="one-axis sweep of bounds and MLE error")
    common(p_sw)
    p_sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sw.add_argument("--values", required=True, help="comma-separated axis values")
    p_sw.add_argument("--no-mle", action="store_true", help="skip Monte Carlo, bounds only")
    return parser


def _resolve_t0(args) -> float:
    if getattr(args, "scenario", None):
        _, t0 = load_scenario(args.scenario)
        return t0
    if getattr(args, "t0", None):
        return args.t0
    raise ValueError("provide --scenario or --t0 to fix the symbol interval")


def _schedule_from_args(args, t0: float) -> SymbolSchedule:
    if args.schedule == "prop3":
        return ScheduleSpec(kind="prop3").build(args.k_all, args.k, t0)
    if args.schedule == "alg1":
        return ScheduleSpec(kind="alg1", k_f=args.k_f, f_ex_hz=args.f_ex).build(
            args.k_all, args.k, t0
        )
    return load_schedule(args.schedule)


def cli(argv) -> int:
    """Entry point; returns 0 on success, 2 on config errors, 3 on numerical failure."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    try:
        if args.command == "crb":
            scenario, t0 = load_scenario(args.scenario)
            schedule = _schedule_from_args(args, t0)
            nyq = schedule.nyquist_hz
            f_grid = np.linspace(-nyq, nyq, args.points)
            export_curves(scenario, schedule, args.out, f_grid=f_grid, fmt=args.format)
        elif args.command == "pattern":
            t0 = _resolve_t0(args)
            schedule = _schedule_from_args(args, t0)
            report = pattern_report(schedule, points=args.points)
            _write_pattern(report, schedule, args.out, args.format)
        elif args.command == "optimize":
            t0 = _resolve_t0(args)
            schedule = _schedule_from_args(args, t0)
            save_schedule(schedule, args.out)
        elif args.command == "montecarlo":
            scenario, t0 = load_scenario(args.scenario)
            schedule = _schedule_from_args(args, t0)
            result = run_monte_carlo(scenario, schedule, args.trials, args.seed)
            crb = crb_doppler_exact(scenario, schedule).crb_fd
            payload = {
                "rmse_hz": result.rmse_hz,
                "bias_hz": result.bias_hz,
                "trials": args.trials,
                "seed": args.seed,
                "n_nonconverged": result.n_nonconverged,
                "crb_exact_hz2": crb,
                "sqrt_crb_hz": math.sqrt(crb) if math.isfinite(crb) else math.inf,
            }
            _write_mapping(payload, args.out, args.format)
        elif args.command == "sweep":
            scenario, t0 = load_scenario(args.scenario)
            values = tuple(float(v) for v in args.values.split(","))
            spec_kind = args.schedule if args.schedule in ("prop3", "alg1") else "file"
            spec = ScheduleSpec(
                kind=spec_kind,
                k_f=args.k_f,
                f_ex_hz=args.f_ex,
                path=None if spec_kind != "file" else args.schedule,
            )
            config = SweepConfig(
                scenario_base=scenario,
                t0=t0,
                sweep_axis=args.axis,
                axis_values=values,
                schedule_spec=spec,
                k_all=args.k_all,
                K=args.k,
                trials=args.trials,
                seed=args.seed,
                run_mle=not args.no_mle,
            )
            export(sweep(config), args.out, args.format)
        else:
            parser.error(f"unknown command {args.command}")
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    return 0


def _write_pattern(report, schedule: SymbolSchedule, path, fmt: str) -> None:
    env = report.envelope_values
    if env is None:
        env = np.full_like(report.f_grid, np.nan)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write(f"# k_all={schedule.k_all}\n# K={schedule.K}\n# T0_s={schedule.t0!r}\n")
            fh.write(f"# f_d_mainlobe_hz={report.f_d_mainlobe}\n")
            writer = csv.writer(fh)
            writer.writerow(["f_d_hz", "pattern", "envelope"])
            for f, p, e in zip(report.f_grid, report.p_values, env):
                writer.writerow([f"{f:.17g}", f"{p:.17g}", f"{e:.17g}"])
    else:
        payload = {
            "k_all": schedule.k_all,
            "K": schedule.K,
            "T0_s": schedule.t0,
            "f_d_mainlobe_hz": report.f_d_mainlobe,
            "grating_lobe_flag": report.grating_lobe_flag,
            "f_d_hz": report.f_grid.tolist(),
            "pattern": report.p_values.tolist(),
            "envelope": env.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")


def _write_mapping(payload: dict, path, fmt: str) -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(payload.keys()))
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else str(v) for v in payload.values()])


def main() -> None:
    sys.exit(cli(sys.argv[1:]))
