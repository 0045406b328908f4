"""Exact Doppler Cramer-Rao bound for the Gaussian CSI-ratio model.

Two independent routes to the same 2x2 information matrix H over
(f_d, theta_d):

* assemble the K x 6 Jacobian of the model mean, form the 6x6 Fisher matrix
  F = 2*Re{J^H diag(eta)^-1 J}, and take the Schur complement of its
  nuisance block;
* evaluate the closed form built from the epsilon/gamma sums below, with
  rho2 = a(theta_d) - rho0.

Both are computed on every call and must agree to 1e-8 relative; the Doppler
bound is [H^-1]_{1,1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ClosedFormMismatch
from .scenario import (
    ChannelScenario,
    aggregate_statics,
    steering_phasor_derivative,
    validate_pairing,
)
from .schedule import SymbolSchedule
from .sim import model_vectors, ratio_model

COND_NEAR_SINGULAR = 1e12
IDENTITY_RTOL = 1e-8


@dataclass(frozen=True)
class ParamVector:
    """Unknowns of the ratio model in the fixed ordering
    [f_d, theta_d, Re rho0, Im rho0, Re rho1, Im rho1]."""

    f_d: float
    theta_d: float
    rho0: complex
    rho1: complex

    def to_array(self) -> np.ndarray:
        return np.array(
            [
                self.f_d,
                self.theta_d,
                self.rho0.real,
                self.rho0.imag,
                self.rho1.real,
                self.rho1.imag,
            ]
        )

    @classmethod
    def from_array(cls, alpha: np.ndarray) -> "ParamVector":
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (6,):
            raise ValueError("parameter vector must have 6 real entries")
        return cls(
            f_d=float(alpha[0]),
            theta_d=float(alpha[1]),
            rho0=complex(alpha[2], alpha[3]),
            rho1=complex(alpha[4], alpha[5]),
        )


@dataclass(frozen=True)
class EpsilonTerms:
    """Weighted sums entering the closed-form H (all from one Lambda weighting)."""

    eps_1: float
    eps_k1: float
    eps_k2: float
    eps_mu2: float
    eps_mu1: complex
    eps_dmu2: complex
    eps_kmu: complex
    eps_dmu1: complex
    eps_dkmu: complex
    gamma_11: float
    gamma_22: float
    gamma_12: float
    lambda_diag: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class CrbResult:
    crb_fd: float  # Hz^2, +inf sentinel when singular
    h_matrix: np.ndarray  # 2x2
    fim: np.ndarray  # 6x6
    condition_flag: str  # ok | near-singular | singular


def _model_pieces(scenario: ChannelScenario, schedule: SymbolSchedule):
    agg = aggregate_statics(scenario)
    a_dyn = scenario.dynamic_phasor()
    a_prime = steering_phasor_derivative(scenario.theta_d, scenario.spacing, scenario.wavelength)
    d, mu, nu = model_vectors(agg.rho0, agg.rho1, a_dyn, scenario.f_d, schedule)
    return agg, a_dyn, a_prime, d, mu, nu


def chi_jacobian(scenario: ChannelScenario, schedule: SymbolSchedule) -> np.ndarray:
    """K x 6 complex Jacobian of the model mean chi w.r.t. the ParamVector order."""
    validate_pairing(scenario, schedule)
    agg, a_dyn, a_prime, d, mu, nu = _model_pieces(scenario, schedule)
    phi = schedule.phi_array()
    kappa = 2.0 * math.pi * schedule.t0
    rho1 = agg.rho1
    diff = a_dyn - agg.rho0  # rho2

    mu2 = mu * mu
    col_f = 1j * kappa * rho1 * diff * phi * d / mu2
    col_theta = rho1 * a_prime * d / mu
    col_r0 = 1.0 / mu
    col_r1 = diff * d / mu2
    jac = np.column_stack(
        [col_f, col_theta, col_r0, 1j * col_r0, col_r1, 1j * col_r1]
    )
    return jac


def fim(scenario: ChannelScenario, schedule: SymbolSchedule) -> np.ndarray:
    """Simplified 6x6 Fisher matrix 2*Re{J^H diag(eta)^-1 J} (high-SNR form)."""
    jac = chi_jacobian(scenario, schedule)
    eta = ratio_model(scenario, schedule).eta
    weighted = jac / eta[:, None]
    return 2.0 * np.real(jac.conj().T @ weighted)


def fim_from_jacobian(jac: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Assemble the Fisher matrix from an externally supplied Jacobian."""
    weighted = jac / np.asarray(eta)[:, None]
    return 2.0 * np.real(jac.conj().T @ weighted)


def epsilon_terms(scenario: ChannelScenario, schedule: SymbolSchedule) -> EpsilonTerms:
    """Evaluate the nine epsilon and three gamma sums of the closed form."""
    validate_pairing(scenario, schedule)
    agg, a_dyn, a_prime, d, mu, nu = _model_pieces(scenario, schedule)
    phi = schedule.phi_array()
    kappa = 2.0 * math.pi * schedule.t0
    lam = 1.0 / (np.abs(mu) ** 2 + np.abs(nu) ** 2)

    eps_1 = float(np.sum(lam))
    eps_k1 = kappa * float(np.sum(lam * phi))
    eps_k2 = kappa**2 * float(np.sum(lam * phi**2))
    eps_mu2 = float(np.sum(lam * np.abs(mu) ** 2))
    eps_mu1 = a_prime * np.sum(lam * mu)
    eps_dmu2 = np.conj(a_prime) * np.sum(np.conj(d) * lam * np.abs(mu) ** 2)
    eps_kmu = kappa * a_prime * np.sum(lam * phi * mu)
    eps_dmu1 = np.sum(np.conj(d) * lam * mu)
    eps_dkmu = kappa * np.sum(np.conj(d) * lam * phi * mu)

    denom = eps_1 * eps_mu2 - abs(eps_dmu1) ** 2
    gamma_11 = (
        eps_1 * abs(eps_dkmu) ** 2
        - 2.0 * eps_k1 * np.real(np.conj(eps_dkmu) * eps_dmu1)
        + eps_mu2 * eps_k1**2
    ) / denom
    gamma_22 = (
        eps_1 * abs(eps_dmu2) ** 2
        - 2.0 * np.real(np.conj(eps_dmu2) * eps_dmu1 * np.conj(eps_mu1))
        + eps_mu2 * abs(eps_mu1) ** 2
    ) / denom
    rho2 = a_dyn - agg.rho0
    gamma_12 = (
        np.imag(
            np.conj(rho2)
            * np.conj(eps_dmu2)
            * (eps_1 * eps_dkmu - eps_k1 * eps_dmu1)
            + np.conj(rho2)
            * eps_mu1
            * (eps_k1 * eps_mu2 - np.conj(eps_dmu1) * eps_dkmu)
        )
        / denom
    )

    return EpsilonTerms(
        eps_1=eps_1,
        eps_k1=eps_k1,
        eps_k2=eps_k2,
        eps_mu2=eps_mu2,
        eps_mu1=complex(eps_mu1),
        eps_dmu2=complex(eps_dmu2),
        eps_kmu=complex(eps_kmu),
        eps_dmu1=complex(eps_dmu1),
        eps_dkmu=complex(eps_dkmu),
        gamma_11=float(gamma_11),
        gamma_22=float(gamma_22),
        gamma_12=float(gamma_12),
        lambda_diag=lam,
        mu=mu,
    )


def h_closed_form(scenario: ChannelScenario, schedule: SymbolSchedule) -> np.ndarray:
    """2x2 information matrix over (f_d, theta_d) from the epsilon/gamma sums."""
    agg, a_dyn, a_prime, *_ = _model_pieces(scenario, schedule)
    eps = epsilon_terms(scenario, schedule)
    rho2 = a_dyn - agg.rho0
    scale = 2.0 * abs(scenario.xi_d) ** 2 / scenario.sigma_n2
    h01 = np.imag(np.conj(rho2) * eps.eps_kmu) - eps.gamma_12
    h = scale * np.array(
        [
            [abs(rho2) ** 2 * (eps.eps_k2 - eps.gamma_11), h01],
            [h01, abs(a_prime) ** 2 * eps.eps_mu2 - eps.gamma_22],
        ]
    )
    return h


def h_from_fim(f: np.ndarray) -> np.ndarray:
    """Schur complement H = F11 - F12 F22^-1 F12^T of the nuisance block."""
    f11 = f[:2, :2]
    f12 = f[:2, 2:]
    f22 = f[2:, 2:]
    return f11 - f12 @ np.linalg.solve(f22, f12.T)


def crb_doppler_exact(scenario: ChannelScenario, schedule: SymbolSchedule) -> CrbResult:
    """Exact Doppler bound [H^-1]_{1,1} with closed-form cross-validation.

    Singular nuisance or H blocks yield crb_fd = +inf with the matching flag
    instead of raising; the closed-form consistency check runs only on
    well-conditioned results.
    """
    f = fim(scenario, schedule)
    try:
        with np.errstate(all="raise"):
            h = h_from_fim(f)
    except (np.linalg.LinAlgError, FloatingPointError):
        return CrbResult(math.inf, np.full((2, 2), np.nan), f, "singular")

    if not np.isfinite(h).all():
        return CrbResult(math.inf, h, f, "singular")

    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or abs(np.linalg.det(h)) == 0.0:
        return CrbResult(math.inf, h, f, "singular")
    flag = "ok" if cond < COND_NEAR_SINGULAR else "near-singular"

    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        return CrbResult(math.inf, h, f, "singular")
    crb = float(h_inv[0, 0])
    if not math.isfinite(crb) or crb <= 0.0:
        return CrbResult(math.inf, h, f, "singular")

    if flag == "ok":
        h_cf = h_closed_form(scenario, schedule)
        rel = np.linalg.norm(h_cf - h) / np.linalg.norm(h)
        if rel > IDENTITY_RTOL:
            raise ClosedFormMismatch(
                f"closed-form H deviates from Jacobian-assembled H by {rel:.3e} relative"
            )
    return CrbResult(crb, h, f, flag)
