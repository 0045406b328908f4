"""Synthetic CSI generation under clock asynchronism and the ratio model.

The simulator produces per-antenna CSI samples with per-symbol timing and
carrier-frequency offsets, forms the cross-antenna ratio numerically, and
evaluates the high-SNR Gaussian model of that ratio (mean chi, variance eta).
Noise is injected before the common clock rotation; a unit-modulus rotation
of circular Gaussian noise changes nothing distributionally, and this
convention makes the offset cancellation in the ratio exact sample by sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroDenominator
from .scenario import (
    ChannelScenario,
    aggregate_statics,
    doppler_steering,
    validate_pairing,
)
from .schedule import SymbolSchedule


@dataclass(frozen=True)
class ClockOffsets:
    """Per-symbol timing offset (seconds) and carrier phase offset (radians)."""

    tmo_s: np.ndarray
    cfo_rad: np.ndarray

    def __post_init__(self):
        tmo = np.asarray(self.tmo_s, dtype=float)
        cfo = np.asarray(self.cfo_rad, dtype=float)
        if tmo.shape != cfo.shape or tmo.ndim != 1:
            raise ValueError("tmo_s and cfo_rad must be 1-D arrays of equal length")
        if not (np.isfinite(tmo).all() and np.isfinite(cfo).all()):
            raise ValueError("clock offsets must be finite")
        object.__setattr__(self, "tmo_s", tmo)
        object.__setattr__(self, "cfo_rad", cfo)


def zero_offsets(k: int) -> ClockOffsets:
    return ClockOffsets(tmo_s=np.zeros(k), cfo_rad=np.zeros(k))


def random_offsets(
    schedule: SymbolSchedule,
    seed,
    tmo_max_s: float | None = None,
) -> ClockOffsets:
    """Default offset generator: cfo uniform on [-pi, pi), tmo uniform on [0, tmo_max).

    tmo_max defaults to one sample duration taken as T0/64; the exact span is
    irrelevant to the ratio (offsets cancel) and only shapes the raw CSI.
    """
    if tmo_max_s is None:
        tmo_max_s = schedule.t0 / 64.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    k = schedule.K
    return ClockOffsets(
        tmo_s=rng.uniform(0.0, tmo_max_s, size=k),
        cfo_rad=rng.uniform(-math.pi, math.pi, size=k),
    )


@dataclass
class CsiRatioSeries:
    """Observed ratios (optional) plus the Gaussian-model mean and variance."""

    chi: np.ndarray
    eta: np.ndarray
    r: np.ndarray | None = None


def model_vectors(
    rho0: complex,
    rho1: complex,
    a_dyn: complex,
    f_d: float,
    schedule: SymbolSchedule,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Doppler phasors d, denominator mu = rho1*d + 1, numerator nu = a*rho1*d + rho0."""
    d = doppler_steering(f_d, schedule)
    mu = rho1 * d + 1.0
    nu = a_dyn * rho1 * d + rho0
    return d, mu, nu


def generate_csi(
    scenario: ChannelScenario,
    schedule: SymbolSchedule,
    offsets: ClockOffsets | None = None,
    seed=0,
    subcarrier_hz: float = 312.5e3,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate per-antenna CSI samples over the schedule.

    Antenna 0 sits at the array origin, antenna 1 at ``spacing``.  Each sample
    is exp(j*cfo_k)*exp(j*2*pi*f_sc*tmo_k) * (static sum + dynamic term + noise)
    with noise i.i.d. circular complex Gaussian of variance sigma_n2.
    Deterministic given ``seed`` (int or tuple).
    """
    validate_pairing(scenario, schedule)
    k = schedule.K
    if offsets is None:
        offsets = zero_offsets(k)
    if offsets.tmo_s.shape[0] != k:
        raise ValueError("offsets length must match the schedule")

    agg = aggregate_statics(scenario)
    a_dyn = scenario.dynamic_phasor()
    d = doppler_steering(scenario.f_d, schedule)

    s0 = agg.h0 + scenario.xi_d * d
    s1 = agg.h1 + scenario.xi_d * a_dyn * d

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    noise = rng.standard_normal((2, k)) + 1j * rng.standard_normal((2, k))
    noise *= math.sqrt(scenario.sigma_n2 / 2.0)

    clock = np.exp(1j * (offsets.cfo_rad + 2.0 * np.pi * subcarrier_hz * offsets.tmo_s))
    y0 = clock * (s0 + noise[0])
    y1 = clock * (s1 + noise[1])
    return y0, y1


def csi_ratio(y0: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """Element-wise y1/y0; the common clock factor cancels exactly."""
    y0 = np.asarray(y0)
    y1 = np.asarray(y1)
    if y0.shape != y1.shape:
        raise ValueError("antenna series must have equal length")
    zeros = np.flatnonzero(y0 == 0)
    if zeros.size:
        raise ZeroDenominator(int(zeros[0]))
    return y1 / y0


def ratio_model(scenario: ChannelScenario, schedule: SymbolSchedule) -> CsiRatioSeries:
    """Gaussian model of the CSI ratio: mean chi and per-sample variance eta."""
    validate_pairing(scenario, schedule)
    agg = aggregate_statics(scenario)
    a_dyn = scenario.dynamic_phasor()
    _, mu, nu = model_vectors(agg.rho0, agg.rho1, a_dyn, scenario.f_d, schedule)
    chi = nu / mu
    noise_scale = scenario.sigma_n2 / abs(agg.h0) ** 2
    eta = noise_scale * (np.abs(mu) ** 2 + np.abs(nu) ** 2) / np.abs(mu) ** 4
    return CsiRatioSeries(chi=chi, eta=eta)


@dataclass(frozen=True)
class HighSnrReport:
    """Validity check of the ratio-linearization regime."""

    regime: str  # static-dominant | dynamic-dominant | indeterminate
    margin: float  # linear amplitude separation, NaN when indeterminate
    sigma_n: float
    valid: bool


def check_high_snr(scenario: ChannelScenario, margin_factor: float = 10.0) -> HighSnrReport:
    """Classify which path dominates and whether the margin dwarfs the noise.

    The linearized ratio model needs the weaker of dynamic/static amplitudes
    to sit well below the stronger one relative to sigma_n; ``valid`` means
    margin > margin_factor * sigma_n.
    """
    agg = aggregate_statics(scenario)
    lo = min(abs(agg.h0), abs(agg.h1))
    hi = max(abs(agg.h0), abs(agg.h1))
    amp_d = abs(scenario.xi_d)
    sigma_n = math.sqrt(scenario.sigma_n2)
    if amp_d < lo:
        regime, margin = "static-dominant", lo - amp_d
    elif amp_d > hi:
        regime, margin = "dynamic-dominant", amp_d - hi
    else:
        return HighSnrReport("indeterminate", float("nan"), sigma_n, False)
    return HighSnrReport(regime, margin, sigma_n, margin > margin_factor * sigma_n)
