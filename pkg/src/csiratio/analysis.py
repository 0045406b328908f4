"""Doppler-pattern machinery and the approximated Doppler bound.

The Doppler pattern P(phi, f) = |mean_k exp(j*2*pi*phi_k*T0*f)| measures the
static-path leakage onto a Doppler hypothesis f.  Its half-power mainlobe
width separates the interference-limited region (bound blows up) from the
sidelobe region where the bound flattens onto a closed-form plateau driven by
the three power ratios.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    GratingLobes,
    NonPositiveDenominator,
    OutOfDomain,
    PreconditionWarning,
    RegimeUndefined,
)
from .crb import crb_doppler_exact
from .scenario import ChannelScenario, power_ratios
from .schedule import SymbolSchedule
from .waveform import envelope, l1_metric

HALF_POWER = 0.707
GRATING_REATTAIN = 0.9
R_SD_SMALL = 0.1
R_SD_LARGE = 8.0


@dataclass
class DopplerPattern:
    """Sampled pattern with optional envelope and mainlobe annotation."""

    f_grid: np.ndarray
    p_values: np.ndarray
    envelope_values: np.ndarray | None = None
    f_d_mainlobe: float | None = None
    grating_lobe_flag: bool = False


def _pattern_values(schedule: SymbolSchedule, f_grid: np.ndarray) -> np.ndarray:
    phi = schedule.phi_array()
    out = np.empty(f_grid.shape, dtype=float)
    # chunked so large grids stay within a few MB of workspace
    step = max(1, int(4e6 // max(1, phi.size)))
    for lo in range(0, f_grid.size, step):
        f = f_grid[lo : lo + step]
        ph = np.exp(2j * np.pi * schedule.t0 * np.outer(f, phi))
        out[lo : lo + step] = np.abs(ph.mean(axis=1))
    return out


def doppler_pattern(schedule: SymbolSchedule, f_grid) -> DopplerPattern:
    """Evaluate P on a grid; fills the exact envelope for symmetric schedules."""
    f_grid = np.atleast_1d(np.asarray(f_grid, dtype=float))
    if np.abs(f_grid).max(initial=0.0) > schedule.nyquist_hz * (1 + 1e-12):
        raise ValueError("f_grid must lie within the unambiguous range [-1/(2T0), 1/(2T0)]")
    p = _pattern_values(schedule, f_grid)
    env = None
    if schedule.is_center_symmetric():
        env = envelope(schedule.half_indexes(), f_grid, schedule.t0)
    return DopplerPattern(f_grid=f_grid, p_values=p, envelope_values=env)


def _upper_envelope_curve(schedule: SymbolSchedule, f_grid: np.ndarray):
    """Search curve for the half-power crossing plus a continuous evaluator."""
    if schedule.is_center_symmetric():
        half = schedule.half_indexes()
        values = envelope(half, f_grid, schedule.t0)
        if values.min() < HALF_POWER:
            return values, lambda f: float(envelope(half, np.array([f]), schedule.t0)[0])
        # degenerate envelope (e.g. K=2) never crosses: fall through to the raw pattern
    p = _pattern_values(schedule, f_grid)
    interior = np.flatnonzero((p[1:-1] >= p[:-2]) & (p[1:-1] > p[2:])) + 1
    if interior.size < 3:
        return p, lambda f: float(_pattern_values(schedule, np.array([f]))[0])
    # piecewise-linear upper envelope through local maxima, anchored at P(0)=1
    knots_f = np.concatenate(([0.0], f_grid[interior], [f_grid[-1]]))
    knots_v = np.concatenate(([1.0], p[interior], [p[-1]]))
    values = np.interp(f_grid, knots_f, knots_v)
    return values, lambda f: float(np.interp(f, knots_f, knots_v))


def mainlobe_width(schedule: SymbolSchedule) -> float:
    """Single-sided half-power width of the Doppler pattern envelope, in Hz.

    The last 0.707 crossing of the envelope is located on a grid of step
    1/(64*K_all*T0) and bisected down to 1e-3 of that step.  Raises
    GratingLobes when the envelope re-attains 0.9 beyond three times the
    first crossing.
    """
    nyq = schedule.nyquist_hz
    df = 1.0 / (64.0 * schedule.k_all * schedule.t0)
    f_grid = np.arange(df, nyq + 0.5 * df, df)
    curve, evaluate = _upper_envelope_curve(schedule, f_grid)

    below = curve < HALF_POWER
    if not below.any():
        raise GratingLobes("envelope never falls below the half-power level")
    first_cross = f_grid[int(np.argmax(below))]
    beyond = f_grid > 3.0 * first_cross
    if beyond.any() and curve[beyond].max() >= GRATING_REATTAIN:
        raise GratingLobes(
            f"pattern re-attains >= {GRATING_REATTAIN} beyond 3x the first half-power crossing"
        )

    crossings = np.flatnonzero(np.diff(np.sign(curve - HALF_POWER)) != 0)
    idx = int(crossings[-1])
    lo, hi = f_grid[idx], f_grid[idx + 1]
    val_lo = curve[idx] - HALF_POWER
    while hi - lo > 1e-3 * df:
        mid = 0.5 * (lo + hi)
        val_mid = evaluate(mid) - HALF_POWER
        if (val_mid > 0) == (val_lo > 0):
            lo, val_lo = mid, val_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pattern_report(schedule: SymbolSchedule, points: int = 2048) -> DopplerPattern:
    """Pattern over [0, 1/(2T0)] with envelope, mainlobe width and grating flag."""
    f_grid = np.linspace(0.0, schedule.nyquist_hz, points)
    report = doppler_pattern(schedule, f_grid)
    try:
        report.f_d_mainlobe = mainlobe_width(schedule)
    except GratingLobes:
        report.grating_lobe_flag = True
    return report


def approx_crb_kernel(
    r_sn: float, r_sd: float, r_a: float, k: int, l1: float, t0: float
) -> float:
    """Sidelobe-plateau Doppler bound from the three power ratios (Hz^2)."""
    if r_a <= 0 or r_sn <= 0 or l1 <= 0:
        return math.inf
    lead = 1.0 / (8.0 * math.pi**2 * t0**2 * k * l1)
    return lead * math.sqrt((1.0 - r_sd) ** 2 + 2.0 * r_a * r_sd) / (r_sn * r_a)


def crb_doppler_approx(
    scenario: ChannelScenario,
    schedule: SymbolSchedule,
    *,
    f_mainlobe: float | None = None,
    check_preconditions: bool = True,
) -> float:
    """Approximated Doppler bound; warns (non-fatally) outside its validity region.

    Valid when |f_d| exceeds the pattern mainlobe width and the
    static-to-dynamic ratio is below 0.1 or above 8.
    """
    ratios = power_ratios(scenario)
    value = approx_crb_kernel(
        ratios.r_sn, ratios.r_sd, ratios.r_a, schedule.K, l1_metric(schedule), schedule.t0
    )
    if check_preconditions:
        if R_SD_SMALL < ratios.r_sd < R_SD_LARGE:
            warnings.warn(
                f"R_SD={ratios.r_sd:.3g} lies in ({R_SD_SMALL}, {R_SD_LARGE}); "
                "the sidelobe approximation degrades",
                PreconditionWarning,
                stacklevel=2,
            )
        try:
            f_m = mainlobe_width(schedule) if f_mainlobe is None else f_mainlobe
        except GratingLobes:
            warnings.warn(
                "mainlobe width undefined (grating lobes); |f_d| precondition unchecked",
                PreconditionWarning,
                stacklevel=2,
            )
        else:
            if abs(scenario.f_d) <= f_m:
                warnings.warn(
                    f"|f_d|={abs(scenario.f_d):.3g} Hz inside the mainlobe "
                    f"({f_m:.3g} Hz); approximation invalid there",
                    PreconditionWarning,
                    stacklevel=2,
                )
    return value


@dataclass(frozen=True)
class LobeSumResult:
    exact: float
    approx: float


def lemma2_sum(
    b0: float, b1: float, phase_phi: float, schedule: SymbolSchedule, f_d: float
) -> LobeSumResult:
    """Direct sum of 1/(b0 + b1*cos(2*pi*phi_k*T0*f_d + phase)) and its
    K/sqrt(b0^2 - b1^2) sidelobe approximation."""
    if b1 < 0:
        raise ValueError("b1 must be nonnegative")
    if b0 <= b1:
        raise NonPositiveDenominator(f"b0={b0} must exceed b1={b1}")
    phi = schedule.phi_array()
    angles = 2.0 * np.pi * phi * schedule.t0 * f_d + phase_phi
    exact = float(np.sum(1.0 / (b0 + b1 * np.cos(angles))))
    approx = schedule.K / math.sqrt(b0**2 - b1**2)
    return LobeSumResult(exact=exact, approx=approx)


def lemma2_residual_bound(
    b0: float, b1: float, schedule: SymbolSchedule, f_d: float, n_terms: int = 50
) -> float:
    """Series bound K*P(phi,f_d)*sum_n C(2n+1,n)*b1^(2n+1)/(2^(2n)*b0^(2n+2))."""
    if b0 <= b1:
        raise NonPositiveDenominator(f"b0={b0} must exceed b1={b1}")
    pattern = float(_pattern_values(schedule, np.array([f_d]))[0])
    term = b1 / b0**2  # n = 0: C(1,0) = 1
    total = term
    for n in range(1, n_terms):
        # C(2n+1, n) / C(2n-1, n-1) = (2n)(2n+1) / (n(n+2))
        term *= (b1**2 / (4.0 * b0**2)) * (2.0 * n) * (2.0 * n + 1.0) / (n * (n + 2.0))
        total += term
    return schedule.K * pattern * total


@dataclass(frozen=True)
class AngleExtremes:
    """Where the bound peaks/dips over the target angle, and how hard."""

    sin_theta_min_crb: float
    sin_theta_max_crb: float
    max_min_crb_ratio: float


def _fold_unit(x: float, period: float) -> float:
    """Shift x by an integer multiple of period into (-1, 1)."""
    base = round(x / period)
    for z in (base, base - 1, base + 1):
        v = x - z * period
        if -1.0 < v < 1.0:
            return v
    raise OutOfDomain(f"no integer shift of {x:.4g} by {period:.4g} lands in (-1, 1)")


def corollary2_extremes(
    h0: complex, h1: complex, wavelength: float, spacing: float
) -> AngleExtremes:
    """Angle-domain extremes of the Doppler bound for given static aggregates.

    The bound peaks where the dynamic steering phasor aligns the static
    mismatch (sin_theta_max_crb) and dips half a steering period away; the
    peak-to-dip bound ratio is ((|h1|+|h0|)/(|h1|-|h0|))^2, infinite at
    |h1| = |h0| (unobservable-angle case).
    """
    if h0 == 0 or h1 == 0:
        raise ValueError("h0 and h1 must be nonzero")
    period = wavelength / spacing
    base = wavelength / (2.0 * math.pi * spacing) * cmath.phase(h1 / h0)
    sin_max = _fold_unit(base, period)
    sin_min = _fold_unit(base + 0.5 * period, period)
    diff = abs(abs(h1) - abs(h0))
    ratio = math.inf if diff == 0.0 else ((abs(h1) + abs(h0)) / diff) ** 2
    return AngleExtremes(
        sin_theta_min_crb=sin_min, sin_theta_max_crb=sin_max, max_min_crb_ratio=ratio
    )


def equivalent_static_angle(
    h0: complex, h1: complex, wavelength: float, spacing: float
) -> float:
    """Angle of the single equivalent static reflector, arcsin((lambda/2 pi d) * arg(h1/h0))."""
    arg = wavelength / (2.0 * math.pi * spacing) * cmath.phase(h1 / h0)
    if abs(arg) > 1.0:
        raise OutOfDomain(f"arcsin argument {arg:.4g} outside [-1, 1]")
    return math.asin(arg)


@dataclass(frozen=True)
class RegimeResult:
    regime: str  # r_sd_large | r_sd_small
    crb_value: float


def corollary3_regime(scenario: ChannelScenario, schedule: SymbolSchedule) -> RegimeResult:
    """Static-dominant / dynamic-dominant simplification of the plateau bound."""
    ratios = power_ratios(scenario)
    lead = 1.0 / (
        8.0 * math.pi**2 * schedule.t0**2 * schedule.K * l1_metric(schedule)
    )
    if ratios.r_sd > R_SD_LARGE:
        return RegimeResult("r_sd_large", lead * ratios.r_sd / (ratios.r_sn * ratios.r_a))
    if ratios.r_sd < R_SD_SMALL:
        return RegimeResult("r_sd_small", lead / (ratios.r_sn * ratios.r_a))
    raise RegimeUndefined(
        f"R_SD={ratios.r_sd:.3g} lies between {R_SD_SMALL} and {R_SD_LARGE}"
    )


def export_curves(
    scenario: ChannelScenario,
    schedule: SymbolSchedule,
    path,
    f_grid=None,
    fmt: str = "csv",
) -> None:
    """Write pattern / envelope / exact and approximated bound curves over f_d.

    Columns: f_d_hz, v_mps, pattern, envelope, crb_exact, crb_approx with the
    velocity convention v = f_d * lambda / 2.
    """
    if f_grid is None:
        nyq = schedule.nyquist_hz
        f_grid = np.linspace(-nyq, nyq, 2048)
    f_grid = np.asarray(f_grid, dtype=float)
    pat = doppler_pattern(schedule, f_grid)
    env = pat.envelope_values
    if env is None:
        env = np.full_like(f_grid, np.nan)
    approx = crb_doppler_approx(scenario, schedule, check_preconditions=False)
    exact = np.empty_like(f_grid)
    for i, f in enumerate(f_grid):
        exact[i] = crb_doppler_exact(scenario.replace(f_d=float(f)), schedule).crb_fd
    v = f_grid * scenario.wavelength / 2.0
    header = ["f_d_hz", "v_mps", "pattern", "envelope", "crb_exact", "crb_approx"]
    rows = list(zip(f_grid, v, pat.p_values, env, exact, np.full_like(f_grid, approx)))
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{x:.17g}" for x in row])
    elif fmt == "json":
        payload = {name: [float(r[i]) for r in rows] for i, name in enumerate(header)}
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
