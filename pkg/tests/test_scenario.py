import cmath
import math

import numpy as np
import pytest

from csiratio import (
    ChannelScenario,
    DegenerateStatics,
    SymbolSchedule,
    aggregate_statics,
    doppler_steering,
    load_scenario,
    power_ratios,
    save_scenario,
    steering_phasor,
)


def test_steering_phasor_broadside():
    assert steering_phasor(0.0, 0.05, 0.1) == pytest.approx(1.0 + 0.0j)


def test_steering_phasor_endfire():
    # half-wavelength spacing at 90 degrees puts the elements in antiphase
    assert steering_phasor(math.pi / 2, 0.05, 0.1) == pytest.approx(-1.0 + 0.0j)


def test_steering_phasor_ten_degrees():
    expected = cmath.exp(1j * math.pi * math.sin(math.radians(10.0)))
    got = steering_phasor(math.radians(10.0), 0.05, 0.1)
    assert got == pytest.approx(expected, abs=1e-15)
    assert got.real == pytest.approx(0.8548, abs=5e-4)
    assert got.imag == pytest.approx(0.5190, abs=5e-4)


def test_steering_phasor_unit_modulus(rng):
    for _ in range(200):
        theta = rng.uniform(-math.pi / 2, math.pi / 2)
        d = rng.uniform(0.01, 0.2)
        lam = rng.uniform(0.01, 0.5)
        assert abs(abs(steering_phasor(theta, d, lam)) - 1.0) < 1e-12


def test_doppler_steering_zero_frequency():
    sched = SymbolSchedule(phi=(0, 3, 7, 12), k_all=16, t0=125e-6)
    assert np.allclose(doppler_steering(0.0, sched), np.ones(4))


def test_doppler_steering_full_cycle_wrap():
    t0 = 125e-6
    sched = SymbolSchedule(phi=(0, 4), k_all=8, t0=t0)
    d = doppler_steering(1.0 / (4 * t0), sched)
    assert np.allclose(d, [1.0, 1.0], atol=1e-12)


def test_doppler_steering_direct_value():
    sched = SymbolSchedule(phi=(0, 1, 2), k_all=8, t0=125e-6)
    d = doppler_steering(100.0, sched)
    assert d[1] == pytest.approx(cmath.exp(1j * 0.025 * math.pi), abs=1e-12)
    assert np.max(np.abs(np.abs(d) - 1.0)) < 1e-12


def _one_path_scenario(gain, angle, **kw):
    defaults = dict(
        wavelength=0.1,
        spacing=0.05,
        xi_d=0.1,
        theta_d=0.0,
        f_d=100.0,
        sigma_n2=1e-3,
    )
    defaults.update(kw)
    return ChannelScenario(static_paths=((gain, angle),), **defaults)


def test_aggregate_single_path():
    agg = aggregate_statics(_one_path_scenario(1.0 + 0.0j, 0.0))
    assert agg.h0 == pytest.approx(1.0)
    assert agg.h1 == pytest.approx(1.0)
    assert agg.rho0 == pytest.approx(1.0)


def test_aggregate_cancellation_raises():
    scen = ChannelScenario(
        wavelength=0.1,
        spacing=0.05,
        xi_d=0.1,
        theta_d=0.0,
        f_d=100.0,
        static_paths=((1.0, 0.2), (-1.0, 0.2)),
        sigma_n2=1e-3,
    )
    with pytest.raises(DegenerateStatics):
        aggregate_statics(scen)


def test_from_ratios_passthrough_exact():
    rho0 = 1.2 * cmath.exp(-1j * math.radians(30.0))
    rho1 = 0.1 * cmath.exp(-1j * math.radians(110.0))
    scen = ChannelScenario.from_ratios(rho0, rho1, 1.0)
    agg = aggregate_statics(scen)
    assert agg.rho0 == pytest.approx(rho0, abs=1e-14)
    assert agg.rho1 == pytest.approx(rho1, abs=1e-14)
    assert abs(agg.h0) == pytest.approx(1.0, abs=1e-14)


def test_power_ratios_paper_values(paper):
    scen, _ = paper
    ratios = power_ratios(scen)
    assert ratios.r_sd == pytest.approx(122.0, rel=1e-12)
    assert ratios.r_a == pytest.approx(0.527, abs=5e-4)
    assert ratios.r_sn == pytest.approx(1220.0, rel=1e-12)


def test_r_a_zero_when_aligned():
    # choose the dynamic angle so the steering phasor equals rho0's phase
    rho0 = cmath.exp(1j * 0.4)
    theta = math.asin(0.4 / math.pi)
    scen = ChannelScenario.from_ratios(rho0, 0.1, 1.0, theta_d=theta)
    assert power_ratios(scen).r_a == pytest.approx(0.0, abs=1e-14)


def test_r_a_two_when_phase_opposed():
    # |h1| = |h0| with steering antiphase to rho0 maximizes the mismatch
    rho0 = cmath.exp(1j * 0.4)
    theta = math.asin((0.4 - math.pi) / math.pi)  # phase 0.4 + pi, wrapped
    scen = ChannelScenario.from_ratios(rho0, 0.1, 1.0, theta_d=theta)
    assert power_ratios(scen).r_a == pytest.approx(2.0, abs=1e-12)
    # numeric maximization over the angle grid agrees
    grid = [
        power_ratios(scen.replace(theta_d=math.asin(s))).r_a
        for s in np.linspace(-1, 1, 4001)
    ]
    assert max(grid) == pytest.approx(2.0, abs=1e-5)


def test_r_a_expansion_identity(rng):
    # r_a == 1 - 2*Re{a h0 h1*}/(|h0|^2+|h1|^2) to machine precision
    for _ in range(300):
        scen = _random_scenario(rng)
        agg = aggregate_statics(scen)
        a = scen.dynamic_phasor()
        expansion = 1.0 - 2.0 * np.real(a * agg.h0 * np.conj(agg.h1)) / (
            abs(agg.h0) ** 2 + abs(agg.h1) ** 2
        )
        assert power_ratios(scen).r_a == pytest.approx(expansion, abs=1e-12)


def _random_scenario(rng):
    n_paths = int(rng.integers(1, 4))
    paths = tuple(
        (
            complex(rng.normal(), rng.normal()),
            float(rng.uniform(-math.pi / 2, math.pi / 2)),
        )
        for _ in range(n_paths)
    )
    scen = ChannelScenario(
        wavelength=0.1,
        spacing=0.05,
        xi_d=complex(rng.normal(), rng.normal()) * 0.3,
        theta_d=float(rng.uniform(-math.pi / 2, math.pi / 2)),
        f_d=float(rng.uniform(-3000, 3000)),
        static_paths=paths,
        sigma_n2=float(rng.uniform(1e-4, 1e-2)),
    )
    # reject near-cancellation draws; they are exercised separately
    aggregate_statics(scen)
    return scen


def test_r_a_chain_inequality_random(rng):
    # 0 <= (|h0|-|h1|)^2/S <= r_a <= (|h0|+|h1|)^2/S <= 2 over 10^4 draws
    count = 0
    while count < 10_000:
        try:
            scen = _random_scenario(rng)
        except DegenerateStatics:
            continue
        count += 1
        agg = aggregate_statics(scen)
        s = abs(agg.h0) ** 2 + abs(agg.h1) ** 2
        lo = (abs(agg.h0) - abs(agg.h1)) ** 2 / s
        hi = (abs(agg.h0) + abs(agg.h1)) ** 2 / s
        r_a = power_ratios(scen).r_a
        assert -1e-12 <= lo <= r_a + 1e-12
        assert r_a <= hi + 1e-12
        assert hi <= 2.0 + 1e-12


def test_scenario_json_round_trip(tmp_path, paper):
    scen, _ = paper
    path = tmp_path / "scenario.json"
    save_scenario(scen, 125e-6, path)
    loaded, t0 = load_scenario(path)
    assert t0 == 125e-6
    assert loaded.wavelength == scen.wavelength
    agg0, agg1 = aggregate_statics(scen), aggregate_statics(loaded)
    assert agg1.rho0 == pytest.approx(agg0.rho0, abs=1e-15)
    assert agg1.rho1 == pytest.approx(agg0.rho1, abs=1e-15)


def test_scenario_json_direct_form(tmp_path):
    path = tmp_path / "direct.json"
    path.write_text(
        """
        {"lambda_m": 0.1, "d_m": 0.05, "T0_s": 125e-6, "sigma_n2": 1e-3,
         "theta_d_deg": 10.0, "f_d_hz": 100.0,
         "rho0_mag": 1.2, "rho0_phase_deg": -30.0,
         "rho1_mag": 0.1, "rho1_phase_deg": -110.0, "h_s0_mag": 1.0}
        """
    )
    scen, t0 = load_scenario(path)
    assert t0 == pytest.approx(125e-6)
    agg = aggregate_statics(scen)
    assert agg.rho0 == pytest.approx(1.2 * cmath.exp(-1j * math.radians(30.0)), abs=1e-12)
    ratios = power_ratios(scen)
    assert ratios.r_sd == pytest.approx(122.0, rel=1e-9)


def test_schedule_validation():
    with pytest.raises(ValueError):
        SymbolSchedule(phi=(0, 0, 1), k_all=8, t0=1e-4)
    with pytest.raises(ValueError):
        SymbolSchedule(phi=(0, 9), k_all=8, t0=1e-4)
    with pytest.raises(ValueError):
        SymbolSchedule(phi=(1, 0), k_all=8, t0=1e-4)
