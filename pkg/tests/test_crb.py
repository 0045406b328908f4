import cmath
import math

import numpy as np
import pytest

from csiratio import (
    ChannelScenario,
    SymbolSchedule,
    aggregate_statics,
    chi_jacobian,
    crb_doppler_exact,
    epsilon_terms,
    fim,
    h_closed_form,
    h_from_fim,
    lemma2_sum,
    noise_limited_schedule,
    ratio_model,
)
from csiratio.crb import fim_from_jacobian

FD_STEP = 1e-6


def _scenario_from_ratios(rho0, rho1, h0_mag, theta_d, f_d, sigma_n2):
    return ChannelScenario.from_ratios(
        rho0, rho1, h0_mag, theta_d=theta_d, f_d=f_d, sigma_n2=sigma_n2
    )


def fd_jacobian(scenario, schedule, step=FD_STEP):
    """Central finite differences of the model mean, column per parameter."""
    agg = aggregate_statics(scenario)
    h0_mag = abs(agg.h0)

    def chi_at(f_d=None, theta=None, rho0=None, rho1=None):
        scen = _scenario_from_ratios(
            agg.rho0 if rho0 is None else rho0,
            agg.rho1 if rho1 is None else rho1,
            h0_mag,
            scenario.theta_d if theta is None else theta,
            scenario.f_d if f_d is None else f_d,
            scenario.sigma_n2,
        )
        return ratio_model(scen, schedule).chi

    cols = [
        (chi_at(f_d=scenario.f_d + step) - chi_at(f_d=scenario.f_d - step)) / (2 * step),
        (chi_at(theta=scenario.theta_d + step) - chi_at(theta=scenario.theta_d - step))
        / (2 * step),
        (chi_at(rho0=agg.rho0 + step) - chi_at(rho0=agg.rho0 - step)) / (2 * step),
        (chi_at(rho0=agg.rho0 + 1j * step) - chi_at(rho0=agg.rho0 - 1j * step)) / (2 * step),
        (chi_at(rho1=agg.rho1 + step) - chi_at(rho1=agg.rho1 - step)) / (2 * step),
        (chi_at(rho1=agg.rho1 + 1j * step) - chi_at(rho1=agg.rho1 - 1j * step)) / (2 * step),
    ]
    return np.column_stack(cols)


def _random_high_snr(rng, max_k=64):
    """Well-conditioned random scenario/schedule pair in the sidelobe region."""
    while True:
        t0 = float(rng.uniform(5e-5, 5e-4))
        k_all = int(rng.integers(32, 200))
        k = int(rng.integers(8, min(max_k, k_all) + 1))
        phi = np.sort(rng.choice(k_all, size=k, replace=False))
        sched = SymbolSchedule(phi=tuple(int(p) for p in phi), k_all=k_all, t0=t0)
        rho0 = rng.uniform(0.3, 2.5) * cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        rho1 = rng.uniform(0.02, 0.4) * cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        theta = float(rng.uniform(-1.2, 1.2))
        scen = _scenario_from_ratios(
            rho0,
            rho1,
            1.0,
            theta,
            float(rng.uniform(0.05, 0.45)) / t0,
            (0.5 * (1 + abs(rho0) ** 2)) / 10 ** (rng.uniform(28, 35) / 10),
        )
        if abs(scen.dynamic_phasor() - rho0) < 0.2:
            continue  # nearly unobservable angle, exercised separately
        result = crb_doppler_exact(scen, sched)
        if result.condition_flag == "ok" and np.linalg.cond(result.h_matrix) < 1e7:
            return scen, sched


def test_jacobian_matches_finite_differences(paper):
    scen, sched = paper
    jac = chi_jacobian(scen, sched)
    ref = fd_jacobian(scen, sched)
    for col in range(6):
        err = np.linalg.norm(jac[:, col] - ref[:, col]) / np.linalg.norm(ref[:, col])
        assert err < 1e-6, f"column {col} relative error {err:.2e}"


def test_jacobian_matches_fd_random(rng):
    for _ in range(20):
        scen, sched = _random_high_snr(rng)
        jac = chi_jacobian(scen, sched)
        ref = fd_jacobian(scen, sched)
        assert np.linalg.norm(jac - ref) / np.linalg.norm(ref) < 1e-6


def test_jacobian_imag_columns_are_rotations(paper):
    scen, sched = paper
    jac = chi_jacobian(scen, sched)
    assert np.allclose(jac[:, 3], 1j * jac[:, 2], rtol=1e-14)
    assert np.allclose(jac[:, 5], 1j * jac[:, 4], rtol=1e-14)


def test_jacobian_doppler_column_zero_when_no_dynamic(paper):
    _, sched = paper
    scen = _scenario_from_ratios(1.2 * cmath.exp(-0.5j), 0.0, 1.0, 0.2, 100.0, 1e-3)
    jac = chi_jacobian(scen, sched)
    assert np.allclose(jac[:, 0], 0.0)


def test_jacobian_zero_when_steering_equals_rho0(paper):
    _, sched = paper
    # a(theta) = rho0: the dynamic and static responses coincide
    theta = 0.3
    rho0 = cmath.exp(1j * math.pi * math.sin(theta))
    scen = _scenario_from_ratios(rho0, 0.1 * cmath.exp(0.7j), 1.0, theta, 100.0, 1e-3)
    jac = chi_jacobian(scen, sched)
    assert np.allclose(jac[:, 0], 0.0, atol=1e-14)
    assert np.allclose(jac[:, 4], 0.0, atol=1e-14)


def test_fim_scales_inversely_with_noise(paper):
    scen, sched = paper
    f1 = fim(scen, sched)
    f2 = fim(scen.replace(sigma_n2=2 * scen.sigma_n2), sched)
    assert np.allclose(f2, f1 / 2.0, rtol=1e-12)


def test_fim_rotation_structure(paper):
    scen, sched = paper
    f = fim(scen, sched)
    assert np.allclose(f, f.T, rtol=1e-12)
    assert f[2, 2] == pytest.approx(f[3, 3], rel=1e-12)
    assert f[4, 4] == pytest.approx(f[5, 5], rel=1e-12)
    assert f[2, 3] == pytest.approx(0.0, abs=1e-9 * abs(f[2, 2]))
    assert f[4, 5] == pytest.approx(0.0, abs=1e-9 * abs(f[4, 4]))
    assert f[2, 4] == pytest.approx(f[3, 5], rel=1e-12)
    assert f[2, 5] == pytest.approx(-f[3, 4], rel=1e-12)


def test_fim_positive_semidefinite(paper, rng):
    scen, sched = paper
    eig = np.linalg.eigvalsh(fim(scen, sched))
    assert eig.min() > -1e-9 * eig.max()
    for _ in range(5):
        s, sch = _random_high_snr(rng)
        eig = np.linalg.eigvalsh(fim(s, sch))
        assert eig.min() > -1e-9 * eig.max()


def test_fim_matches_fd_assembly(paper):
    scen, sched = paper
    eta = ratio_model(scen, sched).eta
    f_ref = fim_from_jacobian(fd_jacobian(scen, sched), eta)
    f = fim(scen, sched)
    assert np.linalg.norm(f - f_ref) / np.linalg.norm(f_ref) < 1e-6


def test_crb_matches_full_inverse_oracle(paper):
    scen, sched = paper
    result = crb_doppler_exact(scen, sched)
    oracle = np.linalg.inv(fim(scen, sched))[0, 0]
    assert result.condition_flag == "ok"
    assert abs(result.crb_fd - oracle) / oracle < 1e-8


def test_crb_schur_vs_direct_random(rng):
    for _ in range(25):
        scen, sched = _random_high_snr(rng)
        result = crb_doppler_exact(scen, sched)
        oracle = np.linalg.inv(result.fim)[0, 0]
        assert abs(result.crb_fd - oracle) / oracle < 1e-8


def test_closed_form_equals_schur_random(rng):
    for _ in range(50):
        scen, sched = _random_high_snr(rng)
        h_cf = h_closed_form(scen, sched)
        h_direct = h_from_fim(fim(scen, sched))
        rel = np.linalg.norm(h_cf - h_direct) / np.linalg.norm(h_direct)
        assert rel < 1e-8


def test_crb_noise_proportionality(paper):
    scen, sched = paper
    c1 = crb_doppler_exact(scen, sched).crb_fd
    c2 = crb_doppler_exact(scen.replace(sigma_n2=2 * scen.sigma_n2), sched).crb_fd
    assert c2 == pytest.approx(2 * c1, rel=1e-10)


def test_crb_singular_without_dynamic_path(paper):
    _, sched = paper
    scen = _scenario_from_ratios(1.2 * cmath.exp(-0.5j), 0.0, 1.0, 0.2, 100.0, 1e-3)
    result = crb_doppler_exact(scen, sched)
    assert result.condition_flag == "singular"
    assert math.isinf(result.crb_fd)


def test_crb_invariant_under_common_phase_rotation(paper):
    scen, sched = paper
    base = crb_doppler_exact(scen, sched).crb_fd
    for psi in (0.3, 1.7, -2.2):
        rot = cmath.exp(1j * psi)
        rotated = scen.replace(
            xi_d=scen.xi_d * rot,
            static_paths=tuple((g * rot, a) for g, a in scen.static_paths),
        )
        value = crb_doppler_exact(rotated, sched).crb_fd
        assert value == pytest.approx(base, rel=1e-12)


def test_crb_blows_up_at_unobservable_angle(paper):
    _, sched = paper
    # |h1| = |h0| and theta at the max-CRB angle makes the bound diverge
    psi = -math.radians(30.0)
    rho0 = cmath.exp(1j * psi)
    theta_star = math.asin(psi / math.pi)
    rho1 = 0.1 * cmath.exp(-1j * math.radians(110.0))
    far = crb_doppler_exact(
        _scenario_from_ratios(rho0, rho1, 1.0, theta_star + 1.0, 100.0, 1e-3), sched
    ).crb_fd
    values = []
    for eps in (1e-1, 1e-2, 1e-3):
        values.append(
            crb_doppler_exact(
                _scenario_from_ratios(rho0, rho1, 1.0, theta_star + eps, 100.0, 1e-3),
                sched,
            ).crb_fd
        )
    assert values[0] > 10 * far
    assert values[1] > values[0]
    assert values[2] > values[1]
    assert values[2] > 1e5 * far


def test_epsilon_static_only_limit(paper):
    _, sched = paper
    rho0 = 1.2 * cmath.exp(-0.5j)
    scen = _scenario_from_ratios(rho0, 0.0, 1.0, 0.2, 100.0, 1e-3)
    eps = epsilon_terms(scen, sched)
    assert np.allclose(eps.mu, 1.0)
    assert eps.eps_1 == pytest.approx(sched.K / (1.0 + abs(rho0) ** 2), rel=1e-12)


def test_epsilon_lambda_definition(paper):
    scen, sched = paper
    eps = epsilon_terms(scen, sched)
    agg = aggregate_statics(scen)
    from csiratio import doppler_steering

    d = doppler_steering(scen.f_d, sched)
    mu = agg.rho1 * d + 1.0
    nu = scen.dynamic_phasor() * agg.rho1 * d + agg.rho0
    assert np.allclose(eps.lambda_diag, 1.0 / (np.abs(mu) ** 2 + np.abs(nu) ** 2), rtol=1e-12)
    assert np.all(eps.lambda_diag > 0)


def test_epsilon_k1_tends_to_mean_phi(paper):
    # eps_K1/(2 pi T0 eps_1) approaches S_phi_1 in the sidelobe region
    scen, sched = paper
    s1 = float(np.mean(sched.phi_array()))
    kappa = 2.0 * math.pi * sched.t0
    for f_d in (300.0, 700.0, 1500.0):
        eps = epsilon_terms(scen.replace(f_d=f_d), sched)
        assert eps.eps_k1 / (kappa * eps.eps_1) == pytest.approx(s1, rel=0.02)


def test_epsilon_one_closed_form(paper):
    """eps_1 within 2% of K/sqrt(b0^2-b1^2) with the paper's coefficients."""
    scen, sched = paper
    agg = aggregate_statics(scen)
    a = scen.dynamic_phasor()
    b0 = abs(agg.rho0) ** 2 + 2 * abs(agg.rho1) ** 2 + 1.0
    b1 = 2.0 * abs(agg.rho1 * (1.0 + np.conj(agg.rho0) * a))
    assert b0 == pytest.approx(2.46, abs=0.005)
    assert b1 == pytest.approx(0.379, abs=0.001)
    eps = epsilon_terms(scen, sched)
    assert eps.eps_1 == pytest.approx(sched.K / math.sqrt(b0**2 - b1**2), rel=0.02)
    # cross-check against the direct lobe-sum oracle at the same coefficients
    phase = cmath.phase((1.0 + np.conj(agg.rho0) * a) * agg.rho1)
    direct = lemma2_sum(b0, b1, phase, sched, scen.f_d).exact
    assert eps.eps_1 == pytest.approx(direct, rel=1e-12)
