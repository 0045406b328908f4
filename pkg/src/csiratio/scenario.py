"""Physical ground truth for a bistatic CSI-ratio sensing link.

One moving reflector (complex gain, angle of arrival, Doppler) plus a set of
static reflectors, observed by a two-element receive array.  Everything the
bound computations need reduces to the static aggregates h0/h1, the ratios
rho0 = h1/h0 and rho1 = xi_d/h0, and three dimensionless power ratios.
"""

from __future__ import annotations

import cmath
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStatics
from .schedule import SymbolSchedule


def steering_phasor(theta: float, spacing: float, wavelength: float) -> complex:
    """Inter-element phasor exp(j*2*pi/lambda * d * sin(theta)); unit modulus."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return cmath.exp(1j * 2.0 * math.pi / wavelength * spacing * math.sin(theta))


def steering_phasor_derivative(theta: float, spacing: float, wavelength: float) -> complex:
    """d/d(theta) of :func:`steering_phasor`."""
    scale = 2.0 * math.pi / wavelength * spacing
    return 1j * scale * math.cos(theta) * steering_phasor(theta, spacing, wavelength)


def doppler_steering(f_d: float, schedule: SymbolSchedule) -> np.ndarray:
    """Per-symbol Doppler phasors exp(j*2*pi*phi_k*f_d*T0); all unit modulus."""
    return np.exp(2j * np.pi * schedule.phi_array() * f_d * schedule.t0)


@dataclass(frozen=True)
class ChannelScenario:
    """Ground truth: one dynamic path, >= 1 static paths, ULA pair, noise power.

    Angles are radians.  ``static_paths`` holds (complex gain, angle) pairs;
    per-subcarrier delays are folded into the complex gains.
    """

    wavelength: float
    spacing: float
    xi_d: complex
    theta_d: float
    f_d: float
    static_paths: tuple[tuple[complex, float], ...]
    sigma_n2: float

    def __post_init__(self):
        object.__setattr__(
            self,
            "static_paths",
            tuple((complex(g), float(a)) for g, a in self.static_paths),
        )
        if self.wavelength <= 0 or self.spacing <= 0:
            raise ValueError("wavelength and spacing must be positive")
        if self.sigma_n2 <= 0:
            raise ValueError("noise power must be positive")
        if not self.static_paths:
            raise ValueError("at least one static path is required")

    @classmethod
    def from_ratios(
        cls,
        rho0: complex,
        rho1: complex,
        h0_mag: float = 1.0,
        *,
        wavelength: float = 0.1,
        spacing: float = 0.05,
        theta_d: float = 0.0,
        f_d: float = 0.0,
        sigma_n2: float = 1e-3,
        synth_angles: tuple[float, float] = (math.radians(-60.0), math.radians(45.0)),
    ) -> "ChannelScenario":
        """Build a scenario that realizes (rho0, rho1, |h0|) exactly.

        Two synthetic static paths are solved for so that their plain and
        steered sums reproduce h0 = h0_mag and h1 = rho0*h0.  Only ratios
        enter the bounds, so h0's phase is fixed to zero and its magnitude is
        a free scale.
        """
        h0 = complex(h0_mag)
        h1 = rho0 * h0
        a1 = steering_phasor(synth_angles[0], spacing, wavelength)
        a2 = steering_phasor(synth_angles[1], spacing, wavelength)
        if abs(a1 - a2) < 1e-9:
            raise ValueError("synthesis angles must map to distinct phasors")
        # solve g1 + g2 = h0, g1*a1 + g2*a2 = h1
        g2 = (h1 - a1 * h0) / (a2 - a1)
        g1 = h0 - g2
        return cls(
            wavelength=wavelength,
            spacing=spacing,
            xi_d=rho1 * h0,
            theta_d=theta_d,
            f_d=f_d,
            static_paths=((g1, synth_angles[0]), (g2, synth_angles[1])),
            sigma_n2=sigma_n2,
        )

    def replace(self, **changes) -> "ChannelScenario":
        from dataclasses import replace as _replace

        return _replace(self, **changes)

    def dynamic_phasor(self) -> complex:
        """a(theta_d) for this geometry."""
        return steering_phasor(self.theta_d, self.spacing, self.wavelength)


@dataclass(frozen=True)
class StaticAggregate:
    """Summed static returns on the two antennas and the derived ratios."""

    h0: complex
    h1: complex
    rho0: complex  # h1 / h0
    rho1: complex  # xi_d / h0


@dataclass(frozen=True)
class PowerRatios:
    """Dimensionless ratios driving the approximated bound."""

    r_sn: float  # mean static power over noise power
    r_sd: float  # mean static power over dynamic power
    r_a: float  # normalized angular mismatch, in [0, 2]


def aggregate_statics(scenario: ChannelScenario, floor_rel: float = 1e-12) -> StaticAggregate:
    """Sum static paths into (h0, h1) and form rho0, rho1.

    Raises DegenerateStatics when |h0| falls below floor_rel * sum(|gains|),
    i.e. the static returns cancel and the ratio model has no reference.
    """
    gains = np.array([g for g, _ in scenario.static_paths])
    phasors = np.array(
        [steering_phasor(a, scenario.spacing, scenario.wavelength) for _, a in scenario.static_paths]
    )
    h0 = complex(gains.sum())
    h1 = complex((gains * phasors).sum())
    scale = float(np.abs(gains).sum())
    if scale == 0.0 or abs(h0) < floor_rel * scale:
        raise DegenerateStatics(
            f"|h0|={abs(h0):.3e} below floor {floor_rel:.1e} * {scale:.3e}"
        )
    return StaticAggregate(h0=h0, h1=h1, rho0=h1 / h0, rho1=scenario.xi_d / h0)


def power_ratios(scenario: ChannelScenario) -> PowerRatios:
    """Static-to-noise, static-to-dynamic and angular-mismatch ratios."""
    agg = aggregate_statics(scenario)
    p_static = 0.5 * (abs(agg.h0) ** 2 + abs(agg.h1) ** 2)
    a_dyn = scenario.dynamic_phasor()
    r_a = abs(agg.h1 - a_dyn * agg.h0) ** 2 / (abs(agg.h0) ** 2 + abs(agg.h1) ** 2)
    r_sd = math.inf if scenario.xi_d == 0 else p_static / abs(scenario.xi_d) ** 2
    return PowerRatios(
        r_sn=p_static / scenario.sigma_n2,
        r_sd=r_sd,
        r_a=r_a,
    )


def validate_pairing(scenario: ChannelScenario, schedule: SymbolSchedule) -> None:
    """Check the unambiguous-Doppler constraint |f_d| <= 1/(2*T0)."""
    limit = schedule.nyquist_hz
    if abs(scenario.f_d) > limit * (1.0 + 1e-12):
        raise ValueError(
            f"|f_d|={abs(scenario.f_d):.6g} Hz exceeds the unambiguous limit "
            f"{limit:.6g} Hz of this schedule"
        )


def load_scenario(path: str | os.PathLike) -> tuple[ChannelScenario, float]:
    """Read a scenario JSON file; returns (scenario, t0_seconds).

    Required keys: lambda_m, d_m, T0_s, sigma_n2, theta_d_deg, f_d_hz, and
    either ``static_paths`` (list of {gain_re, gain_im, theta_deg}) or the
    direct form {rho0_mag, rho0_phase_deg, rho1_mag, rho1_phase_deg, h_s0_mag}.
    """
    with open(path) as fh:
        cfg = json.load(fh)
    for key in ("lambda_m", "d_m", "T0_s", "sigma_n2", "theta_d_deg", "f_d_hz"):
        if key not in cfg:
            raise ValueError(f"scenario file missing required key {key!r}")
    wavelength = float(cfg["lambda_m"])
    spacing = float(cfg["d_m"])
    t0 = float(cfg["T0_s"])
    theta_d = math.radians(float(cfg["theta_d_deg"]))
    f_d = float(cfg["f_d_hz"])
    sigma_n2 = float(cfg["sigma_n2"])

    if "static_paths" in cfg:
        paths = tuple(
            (
                complex(float(p["gain_re"]), float(p["gain_im"])),
                math.radians(float(p["theta_deg"])),
            )
            for p in cfg["static_paths"]
        )
        if "xi_d_re" in cfg or "xi_d_im" in cfg:
            xi_d = complex(float(cfg.get("xi_d_re", 0.0)), float(cfg.get("xi_d_im", 0.0)))
        else:
            raise ValueError("physical form requires xi_d_re / xi_d_im")
        scenario = ChannelScenario(
            wavelength=wavelength,
            spacing=spacing,
            xi_d=xi_d,
            theta_d=theta_d,
            f_d=f_d,
            static_paths=paths,
            sigma_n2=sigma_n2,
        )
    else:
        for key in ("rho0_mag", "rho0_phase_deg", "rho1_mag", "rho1_phase_deg", "h_s0_mag"):
            if key not in cfg:
                raise ValueError(f"direct-form scenario missing key {key!r}")
        rho0 = float(cfg["rho0_mag"]) * cmath.exp(1j * math.radians(float(cfg["rho0_phase_deg"])))
        rho1 = float(cfg["rho1_mag"]) * cmath.exp(1j * math.radians(float(cfg["rho1_phase_deg"])))
        scenario = ChannelScenario.from_ratios(
            rho0,
            rho1,
            float(cfg["h_s0_mag"]),
            wavelength=wavelength,
            spacing=spacing,
            theta_d=theta_d,
            f_d=f_d,
            sigma_n2=sigma_n2,
        )
    return scenario, t0


def save_scenario(
    scenario: ChannelScenario, t0: float, path: str | os.PathLike
) -> None:
    """Write a scenario in the physical (static path list) JSON form."""
    cfg = {
        "lambda_m": scenario.wavelength,
        "d_m": scenario.spacing,
        "T0_s": t0,
        "sigma_n2": scenario.sigma_n2,
        "theta_d_deg": math.degrees(scenario.theta_d),
        "f_d_hz": scenario.f_d,
        "xi_d_re": scenario.xi_d.real,
        "xi_d_im": scenario.xi_d.imag,
        "static_paths": [
            {"gain_re": g.real, "gain_im": g.imag, "theta_deg": math.degrees(a)}
            for g, a in scenario.static_paths
        ],
    }
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2)
        fh.write("\n")


def paper_scenario(
    *,
    r_sn_db: float = 10.0 * math.log10(1220.0),
    f_d: float = 100.0,
    theta_d_deg: float = 10.0,
) -> tuple[ChannelScenario, float]:
    """Reference setup used throughout the experiments; returns (scenario, t0).

    3 GHz carrier (lambda = 0.1 m), half-wavelength pair, T0 = 125 us,
    rho0 = 1.2*exp(-j30deg), rho1 = 0.1*exp(-j110deg), |h0| = 1.
    """
    rho0 = 1.2 * cmath.exp(-1j * math.radians(30.0))
    rho1 = 0.1 * cmath.exp(-1j * math.radians(110.0))
    p_static = 0.5 * (1.0 + abs(rho0) ** 2)
    sigma_n2 = p_static / (10.0 ** (r_sn_db / 10.0))
    scenario = ChannelScenario.from_ratios(
        rho0,
        rho1,
        1.0,
        wavelength=0.1,
        spacing=0.05,
        theta_d=math.radians(theta_d_deg),
        f_d=f_d,
        sigma_n2=sigma_n2,
    )
    return scenario, 125e-6
