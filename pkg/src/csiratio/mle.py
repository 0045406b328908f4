"""Maximum-likelihood Doppler estimation on the Gaussian ratio model.

Two stages.  Stage 1 scans a Doppler grid: a cheap prescan with the
denominator frozen at one (the numerator coefficients are linear and solved
in closed form per frequency) shortlists candidate frequencies, which are
then rescored over the full (f_d, rho1) grid with the proper denominator.
Stage 2 refines all six parameters by quasi-Newton descent on the likelihood
with the combined noise scale sigma_n^2/|h0|^2 concentrated out (its
conditional maximizer is the mean weighted residual).  The estimator is
deterministic: no internal randomness anywhere.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .crb import ParamVector
from .errors import InvalidParams
from .schedule import SymbolSchedule

_Q_FLOOR = 1e-300
_MU_FLOOR = 1e-9


@dataclass(frozen=True)
class EstimatorOptions:
    """Grid sizes, geometry and refinement knobs; hashable so prepared
    estimators can be cached per (schedule, options)."""

    wavelength: float = 0.1
    spacing: float = 0.05
    f_grid_points: int = 2048
    rho1_mags: tuple[float, ...] = (0.01, 0.0316, 0.1, 0.316, 1.0, 3.16)
    rho1_phases: int = 6
    top_candidates: int = 16
    subgrid_offsets: tuple[float, ...] = (-0.5, -0.25, 0.0, 0.25, 0.5)  # in grid steps
    refine_pool: int = 6  # distinct coarse frequencies polished at sub-grid offsets
    n_starts: int = 3
    start_score_window: float = 0.5  # refine runner-up starts within K*window of the best
    objective: str = "full"  # "full" Gaussian likelihood, or "wls" residual-only
    refine_gtol: float = 1e-9
    refine_maxiter: int = 100

    def __post_init__(self):
        if self.objective not in ("full", "wls"):
            raise ValueError("objective must be 'full' or 'wls'")
        if self.f_grid_points < 8 or self.top_candidates < 1:
            raise ValueError("grid sizes too small")


@dataclass(frozen=True)
class EstimationResult:
    alpha_hat: ParamVector
    neg_log_lik: float
    converged: bool
    grid_stage: tuple[float, complex]  # (f_d_init, rho1_init)
    noise_scale_hat: float
    n_iter: int


def _model_terms(alpha: np.ndarray, schedule: SymbolSchedule, wavelength: float, spacing: float):
    """Return d, mu, nu and their K x 6 derivative stacks for a parameter vector."""
    f_d, theta, r0r, r0i, r1r, r1i = alpha
    rho0 = complex(r0r, r0i)
    rho1 = complex(r1r, r1i)
    phi = schedule.phi_array()
    kappa = 2.0 * math.pi * schedule.t0
    d = np.exp(1j * kappa * phi * f_d)
    scale = 2.0 * math.pi * spacing / wavelength
    a = cmath.exp(1j * scale * math.sin(theta))
    a_prime = 1j * scale * math.cos(theta) * a

    mu = rho1 * d + 1.0
    nu = a * rho1 * d + rho0

    k = phi.size
    dmu = np.zeros((k, 6), dtype=complex)
    dnu = np.zeros((k, 6), dtype=complex)
    dd_f = 1j * kappa * phi * d
    dmu[:, 0] = rho1 * dd_f
    dnu[:, 0] = a * rho1 * dd_f
    dnu[:, 1] = a_prime * rho1 * d
    dnu[:, 2] = 1.0
    dnu[:, 3] = 1j
    dmu[:, 4] = d
    dnu[:, 4] = a * d
    dmu[:, 5] = 1j * d
    dnu[:, 5] = 1j * a * d
    return d, mu, nu, dmu, dnu


def _chi_g(mu: np.ndarray, nu: np.ndarray):
    """Model mean and the unit-scale variance shape g = (|mu|^2+|nu|^2)/|mu|^4."""
    mu2 = np.abs(mu) ** 2
    g = (mu2 + np.abs(nu) ** 2) / mu2**2
    return nu / mu, g


def _g_gradients(mu, nu, dmu, dnu):
    """K x 6 real gradients of g plus the chi Jacobian."""
    mu2 = np.abs(mu) ** 2
    g = (mu2 + np.abs(nu) ** 2) / mu2**2
    dm2 = 2.0 * np.real(np.conj(mu)[:, None] * dmu)
    dn2 = 2.0 * np.real(np.conj(nu)[:, None] * dnu)
    dg = (dm2 + dn2) / (mu2**2)[:, None] - 2.0 * (g / mu2)[:, None] * dm2
    jac = (dnu * mu[:, None] - nu[:, None] * dmu) / (mu**2)[:, None]
    return g, dg, jac


def negloglik(
    alpha: ParamVector,
    r: np.ndarray,
    schedule: SymbolSchedule,
    noise_scale: float | None = None,
    *,
    wavelength: float = 0.1,
    spacing: float = 0.05,
) -> float:
    """Negative log likelihood sum |r-chi|^2/eta + ln eta (up to a constant).

    ``noise_scale`` is sigma_n^2/|h0|^2; the ratio alone does not identify it,
    so it must be supplied here (the estimator concentrates it out instead).
    """
    if noise_scale is None or noise_scale <= 0:
        raise InvalidParams("noise_scale (sigma_n^2/|h0|^2) is required and must be positive")
    r = np.asarray(r, dtype=complex)
    _, mu, nu, _, _ = _model_terms(alpha.to_array(), schedule, wavelength, spacing)
    chi, g = _chi_g(mu, nu)
    eta = noise_scale * g
    return float(np.sum(np.abs(r - chi) ** 2 / eta) + np.sum(np.log(eta)))


def negloglik_gradient(
    alpha: ParamVector,
    r: np.ndarray,
    schedule: SymbolSchedule,
    noise_scale: float | None = None,
    *,
    wavelength: float = 0.1,
    spacing: float = 0.05,
) -> np.ndarray:
    """Analytic 6-vector gradient of :func:`negloglik` in the ParamVector order."""
    if noise_scale is None or noise_scale <= 0:
        raise InvalidParams("noise_scale (sigma_n^2/|h0|^2) is required and must be positive")
    r = np.asarray(r, dtype=complex)
    _, mu, nu, dmu, dnu = _model_terms(alpha.to_array(), schedule, wavelength, spacing)
    chi, _ = _chi_g(mu, nu)
    g, dg, jac = _g_gradients(mu, nu, dmu, dnu)
    eta = noise_scale * g
    deta = noise_scale * dg
    resid = r - chi
    term_mean = -2.0 * np.real(np.conj(resid)[:, None] * jac) / eta[:, None]
    term_eta = (1.0 / eta - np.abs(resid) ** 2 / eta**2)[:, None] * deta
    return np.sum(term_mean + term_eta, axis=0)


class MLEstimator:
    """Prepared estimator: grids and steering tensors built once per schedule."""

    def __init__(self, schedule: SymbolSchedule, opts: EstimatorOptions | None = None):
        self.schedule = schedule
        self.opts = opts if opts is not None else EstimatorOptions()
        if schedule.K < 6:
            raise ValueError("need K >= 6 samples for six real parameters")
        nyq = schedule.nyquist_hz
        n = self.opts.f_grid_points
        self.f_grid = np.linspace(-nyq, nyq, n, endpoint=False)
        phi = schedule.phi_array()
        kappa = 2.0 * math.pi * schedule.t0
        self._steer = np.exp(1j * kappa * np.outer(phi, self.f_grid))  # K x F
        self._steer_sum = self._steer.sum(axis=0)
        phases = np.exp(2j * np.pi * np.arange(self.opts.rho1_phases) / self.opts.rho1_phases)
        self.rho1_grid = np.array(
            [m * p for m in self.opts.rho1_mags for p in phases], dtype=complex
        )

    # stage 1 -------------------------------------------------------------

    def _prescan_rss(self, r: np.ndarray) -> np.ndarray:
        """Residual of the linear fit r ~ c1*d(f) + c0 at every grid frequency."""
        k = self.schedule.K
        b1 = self._steer.conj().T @ r
        b0 = r.sum()
        s_d = self._steer_sum
        det = k * k - np.abs(s_d) ** 2
        energy = float(np.sum(np.abs(r) ** 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = (k * b1 - np.conj(s_d) * b0) / det
            c0 = (k * b0 - s_d * b1) / det
            rss = energy - np.real(np.conj(b1) * c1 + np.conj(b0) * c0)
        collinear = det < 1e-6 * k * k
        rss = np.where(collinear, energy - np.abs(b0) ** 2 / k, rss)
        return rss

    def _candidates(self, rss: np.ndarray) -> np.ndarray:
        n_top = min(self.opts.top_candidates, rss.size)
        idx = np.argpartition(rss, n_top - 1)[:n_top]
        mirrored = (rss.size - idx) % rss.size
        return np.unique(np.concatenate([idx, mirrored]))

    def _score_frequency(self, f: float, r: np.ndarray):
        """Best (score, rho1, c1, c0) at one frequency over the whole rho1 grid.

        The numerator coefficients are linear given (f, rho1); the 2x2 normal
        equations are solved in closed form, vectorized over the grid.
        """
        k = self.schedule.K
        phi = self.schedule.phi_array()
        d = np.exp(2j * np.pi * phi * self.schedule.t0 * f)
        mu = 1.0 + np.outer(d, self.rho1_grid)
        x1 = d[:, None] / mu
        x0 = 1.0 / mu
        a11 = np.sum(np.abs(x1) ** 2, axis=0)
        a00 = np.sum(np.abs(x0) ** 2, axis=0)
        a01 = np.sum(np.conj(x1) * x0, axis=0)
        b1 = np.conj(x1).T @ r
        b0 = np.conj(x0).T @ r
        det = a11 * a00 - np.abs(a01) ** 2
        det = np.where(det < 1e-12 * a11 * a00, np.inf, det)
        c1 = (a00 * b1 - a01 * b0) / det
        c0 = (a11 * b0 - np.conj(a01) * b1) / det
        nu = c1[None, :] * d[:, None] + c0[None, :]
        chi = nu / mu
        mu2 = np.abs(mu) ** 2
        g = (mu2 + np.abs(nu) ** 2) / mu2**2
        q = np.sum(np.abs(r[:, None] - chi) ** 2 / g, axis=0)
        if self.opts.objective == "wls":
            score = q
        else:
            score = k * np.log(np.maximum(q, _Q_FLOOR)) + np.sum(np.log(g), axis=0)
        j = int(np.argmin(score))
        return float(score[j]), complex(self.rho1_grid[j]), complex(c1[j]), complex(c0[j])

    def _grid_stage(self, r: np.ndarray):
        """Ranked stage-1 starts: coarse scan, then sub-grid frequency polish.

        The schedule's ambiguity comb puts strong local minima a Rayleigh
        width apart and the true peak generally falls between grid points, so
        the top coarse hits are re-scored at fractional-step offsets and
        several distinct frequencies are kept for multi-start refinement.
        """
        scored = []
        for i in self._candidates(self._prescan_rss(r)):
            f = float(self.f_grid[i])
            scored.append((*self._score_frequency(f, r), f))
        scored.sort(key=lambda s: s[0])

        # keep a pool of well-separated frequencies, polish each at fractional
        # grid offsets (the true peak is generally off-grid and a comb
        # sidelobe can outrank it on-grid), then rank on the polished scores
        step = float(self.f_grid[1] - self.f_grid[0])
        min_sep = 2.0 * step
        pool = []
        for score, rho1, c1, c0, f in scored:
            if any(abs(f - p[-1]) < min_sep for p in pool):
                continue
            best = (score, rho1, c1, c0, f)
            for off in self.opts.subgrid_offsets:
                if off == 0.0:
                    continue
                cand = self._score_frequency(f + off * step, r)
                if cand[0] < best[0]:
                    best = (*cand, f + off * step)
            pool.append(best)
            if len(pool) >= self.opts.refine_pool:
                break
        pool.sort(key=lambda s: s[0])
        return pool[: self.opts.n_starts]

    # stage 2 -------------------------------------------------------------

    def _objective(self, alpha: np.ndarray, r: np.ndarray):
        k = self.schedule.K
        _, mu, nu, dmu, dnu = _model_terms(
            alpha, self.schedule, self.opts.wavelength, self.opts.spacing
        )
        if np.abs(mu).min() < _MU_FLOOR:
            return 1e30, np.zeros(6)
        chi = nu / mu
        g, dg, jac = _g_gradients(mu, nu, dmu, dnu)
        resid = r - chi
        q = float(np.sum(np.abs(resid) ** 2 / g))
        dq = np.sum(
            -2.0 * np.real(np.conj(resid)[:, None] * jac) / g[:, None]
            - (np.abs(resid) ** 2 / g**2)[:, None] * dg,
            axis=0,
        )
        if self.opts.objective == "wls":
            return q, dq
        value = k * math.log(max(q, _Q_FLOOR)) + float(np.sum(np.log(g)))
        grad = k * dq / max(q, _Q_FLOOR) + np.sum(dg / g[:, None], axis=0)
        return value, grad

    def _start_vector(self, rho1: complex, c1: complex, c0: complex, f: float) -> np.ndarray:
        angle_scale = 2.0 * math.pi * self.opts.spacing / self.opts.wavelength
        sin_theta = float(np.clip(cmath.phase(c1 / rho1) / angle_scale, -0.999, 0.999))
        return np.array([f, math.asin(sin_theta), c0.real, c0.imag, rho1.real, rho1.imag])

    def estimate(self, r: np.ndarray) -> EstimationResult:
        r = np.asarray(r, dtype=complex)
        if r.shape != (self.schedule.K,):
            raise ValueError("ratio series length must match the schedule")
        starts = self._grid_stage(r)
        f0, rho1_0 = starts[0][-1], starts[0][1]

        alpha = None
        best_value = math.inf
        converged = False
        n_iter = 0
        # runner-up basins only matter when their stage-1 score is competitive
        score_cut = starts[0][0] + self.opts.start_score_window * self.schedule.K
        for start_idx, (score, rho1_s, c1_s, c0_s, f_s) in enumerate(starts):
            alpha_s = self._start_vector(rho1_s, c1_s, c0_s, f_s)
            value_s, _ = self._objective(alpha_s, r)
            if value_s < best_value:
                alpha, best_value, converged, n_iter = alpha_s, value_s, False, 0
            if start_idx > 0 and score > score_cut:
                continue
            res = minimize(
                self._objective,
                alpha_s,
                args=(r,),
                jac=True,
                method="L-BFGS-B",
                options={"gtol": self.opts.refine_gtol, "maxiter": self.opts.refine_maxiter},
            )
            if np.isfinite(res.x).all() and res.fun < best_value:
                alpha = res.x.copy()
                best_value = float(res.fun)
                converged = bool(res.success)
                n_iter = int(res.nit)

        # model is periodic in f_d and depends on theta only through sin(theta)
        period = 1.0 / self.schedule.t0
        alpha[0] = (alpha[0] + 0.5 * period) % period - 0.5 * period
        alpha[1] = math.asin(math.sin(alpha[1]))

        _, mu, nu, _, _ = _model_terms(
            alpha, self.schedule, self.opts.wavelength, self.opts.spacing
        )
        chi, g = _chi_g(mu, nu)
        q = float(np.sum(np.abs(r - chi) ** 2 / g))
        k = self.schedule.K
        noise_hat = max(q, _Q_FLOOR) / k
        nll = k + k * math.log(noise_hat) + float(np.sum(np.log(g)))
        return EstimationResult(
            alpha_hat=ParamVector.from_array(alpha),
            neg_log_lik=nll,
            converged=converged,
            grid_stage=(f0, rho1_0),
            noise_scale_hat=noise_hat,
            n_iter=n_iter,
        )


@lru_cache(maxsize=8)
def _prepared(schedule: SymbolSchedule, opts: EstimatorOptions) -> MLEstimator:
    return MLEstimator(schedule, opts)


def estimate(
    r: np.ndarray, schedule: SymbolSchedule, opts: EstimatorOptions | None = None
) -> EstimationResult:
    """Estimate the six ratio-model parameters from one CSI-ratio series."""
    if opts is None:
        opts = EstimatorOptions()
    return _prepared(schedule, opts).estimate(r)
