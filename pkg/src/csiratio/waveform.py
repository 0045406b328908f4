"""Sensing-symbol schedule design.

Noise-limited sensing wants the index variance L1 = mean(phi^2) - mean(phi)^2
maximal, which the split edge schedule achieves in closed form.  Interference-
limited sensing instead shapes the pattern envelope: keep 2*K_F symbols fixed
at the band edges, spread the remaining 2*K_B, and iteratively perturb the
free half-indexes to minimize weighted sidelobe power of the envelope subject
to an expected mainlobe bound, then round back to integers (the rounding
perturbs the envelope by less than pi*K_B/(K/2)*|T0*f_d| on the mainlobe).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidSize, SingularUpdate
from .schedule import SymbolSchedule

FROZEN_WEIGHT = 1e12  # finite surrogate for the infinite boundary weight


def noise_limited_schedule(k_all: int, K: int, t0: float) -> SymbolSchedule:
    """Variance-maximizing schedule: first ceil(K/2) and last floor(K/2) indexes."""
    if not (2 <= K <= k_all):
        raise InvalidSize(f"need 2 <= K <= k_all, got K={K}, k_all={k_all}")
    front = list(range(math.ceil(K / 2)))
    back = list(range(k_all - K // 2, k_all))
    return SymbolSchedule(phi=tuple(front + back), k_all=k_all, t0=t0)


def l1_metric(schedule: SymbolSchedule) -> float:
    """Population variance of the symbol indexes, mean(phi^2) - mean(phi)^2."""
    phi = schedule.phi_array()
    return float(np.mean(phi**2) - np.mean(phi) ** 2)


def half_mean_phasor(half_phi, f_grid, t0: float) -> np.ndarray:
    """Complex mean (2/K)*sum exp(j*2*pi*phi_k*T0*f) over the half indexes."""
    half = np.asarray(half_phi, dtype=float)
    f = np.atleast_1d(np.asarray(f_grid, dtype=float))
    return np.exp(2j * np.pi * t0 * np.outer(f, half)).mean(axis=1)


def envelope(half_phi, f_grid, t0: float) -> np.ndarray:
    """Pattern envelope of a center-symmetric schedule from its half indexes."""
    return np.abs(half_mean_phasor(half_phi, f_grid, t0))


def perturbation_bound(K: int, k_b: int, t0: float, f_d: float) -> float:
    """Envelope change bound pi*K_B/(K/2)*|T0*f_d| for half-unit index perturbations."""
    return math.pi * k_b / (K / 2.0) * abs(t0 * f_d)


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the interference-limited design iteration."""

    t0: float
    f_d_mainlobe_ex: float  # expected mainlobe bound; integration starts here
    weight_fn: Callable | tuple | None = None  # f -> weight, (f_tab, w_tab), or None for 1
    step_weight_a: float = 10.0
    # update-difference threshold; 1e-3 stalls the fixed point a few steps in,
    # well short of the sidelobe optimum, so the default is tighter
    convergence_eps: float = 1e-5
    max_iters: int = 200
    quadrature_points: int = 4096

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        nyq = 0.5 / self.t0
        if not (0.0 < self.f_d_mainlobe_ex < nyq):
            raise ValueError("f_d_mainlobe_ex must lie in (0, 1/(2*T0))")
        if self.quadrature_points < 512:
            raise ValueError("quadrature_points must be at least 512")
        if self.step_weight_a <= 0:
            raise ValueError("step_weight_a must be positive")

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoid nodes and combined (weight-function x trapezoid) weights."""
        f = np.linspace(self.f_d_mainlobe_ex, 0.5 / self.t0, self.quadrature_points)
        trap = np.full(self.quadrature_points, f[1] - f[0])
        trap[0] *= 0.5
        trap[-1] *= 0.5
        return f, self.varpi(f) * trap

    def varpi(self, f: np.ndarray) -> np.ndarray:
        if self.weight_fn is None:
            return np.ones_like(f)
        if callable(self.weight_fn):
            return np.asarray(self.weight_fn(f), dtype=float)
        f_tab, w_tab = self.weight_fn
        return np.interp(f, np.asarray(f_tab, dtype=float), np.asarray(w_tab, dtype=float))


@dataclass
class HalfSchedule:
    """Half-schedule state: fixed front block plus the continuous free block."""

    phi_f: tuple[int, ...]
    phi_b: np.ndarray  # real-valued while iterating
    k_all: int
    K: int

    def __post_init__(self):
        self.phi_b = np.asarray(self.phi_b, dtype=float)
        k_f, k_b = len(self.phi_f), self.phi_b.size
        if self.K % 2:
            raise InvalidSize("interference-limited design needs even K")
        if k_f + k_b != self.K // 2:
            raise InvalidSize("K_F + K_B must equal K/2")
        if self.phi_f != tuple(range(k_f)):
            raise ValueError("front block must be exactly [0..K_F-1]")

    @property
    def k_f(self) -> int:
        return len(self.phi_f)

    @property
    def k_b(self) -> int:
        return self.phi_b.size

    def half(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.phi_f, dtype=float), self.phi_b])


def sidelobe_power(half_phi, config: OptimizerConfig) -> float:
    """Weighted integral of the squared envelope over the sidelobe band."""
    f, wts = config.nodes()
    return float(np.sum(wts * envelope(half_phi, f, config.t0) ** 2))


def equal_interval_init(k_all: int, k_f: int, k_b: int) -> np.ndarray:
    """Free-block start: K_B indexes at equal intervals over [K_F, ceil((K_all-1)/2)-1]."""
    hi = math.ceil((k_all - 1) / 2) - 1
    if k_b == 1:
        return np.array([round(0.5 * (k_f + hi))], dtype=float)
    i = np.arange(k_b)
    return k_f + np.round(i * (hi - k_f) / (k_b - 1))


def boundary_weights(phi_b: np.ndarray, k_all: int, k_f: int) -> np.ndarray:
    """Unit weight strictly inside (K_F+1, floor((K_all-1)/2)-1), frozen outside."""
    hi = (k_all - 1) // 2 - 1
    inside = (phi_b > k_f + 1) & (phi_b < hi)
    return np.where(inside, 1.0, FROZEN_WEIGHT)


@dataclass
class DesignResult:
    schedule: SymbolSchedule
    iterations: int
    history: np.ndarray  # sidelobe power per iteration
    converged: bool
    half: HalfSchedule
    measured_mainlobe_hz: float | None = None


def _assemble_full(phi_f: tuple[int, ...], phi_b_int: list[int], k_all: int, t0: float) -> SymbolSchedule:
    half = sorted(list(phi_f) + phi_b_int)
    mirrored = [k_all - 1 - h for h in half]
    return SymbolSchedule(phi=tuple(sorted(half + mirrored)), k_all=k_all, t0=t0)


def _round_free_block(phi_b: np.ndarray, k_all: int, k_f: int) -> list[int]:
    """Round to integers inside [K_F, floor((K_all-1)/2)], pushing collisions
    toward the band center (falling back outward when the center side is full).
    Odd K_all keeps the self-mirroring center index free."""
    hi = (k_all - 1) // 2
    if k_all % 2:
        hi -= 1
    taken = set(range(k_f))
    out = []
    for x in phi_b:
        v = int(np.clip(round(x), k_f, hi))
        probe = v
        while probe in taken and probe <= hi:
            probe += 1
        if probe > hi:
            probe = v
            while probe in taken:
                probe -= 1
            if probe < k_f:
                raise SingularUpdate("no free integer slot for a rounded index")
        taken.add(probe)
        out.append(probe)
    return sorted(out)


def optimize_interference_limited(
    k_all: int, K: int, k_f: int, config: OptimizerConfig
) -> DesignResult:
    """Iterative sidelobe-power minimization of the envelope (fixed-point steps).

    Each step solves (Re{V2} + a*diag(w)) * delta = Im{V1} * 1 for the free
    half-index perturbation, where V1/V2 are the band integrals of the
    envelope's first/second order response, then adds delta.  Stops when
    successive updates differ by less than convergence_eps in max norm.  The
    step is a stationary-point solve, not a guaranteed descent; when the
    iteration cap is hit the lowest-sidelobe-power iterate is returned with
    converged=False.
    """
    if K % 2:
        raise InvalidSize("K must be even")
    if not (2 <= K <= k_all):
        raise InvalidSize(f"need 2 <= K <= k_all, got K={K}, k_all={k_all}")
    if not (0 <= k_f <= K // 2):
        raise InvalidSize("K_F must lie in [0, K/2]")

    if k_f == K // 2:
        schedule = noise_limited_schedule(k_all, K, config.t0)
        half = HalfSchedule(
            phi_f=tuple(range(k_f)), phi_b=np.empty(0), k_all=k_all, K=K
        )
        return DesignResult(schedule, 0, np.empty(0), True, half, _measure_mainlobe(schedule))

    k_b = K // 2 - k_f
    phi_f = tuple(range(k_f))
    state = HalfSchedule(
        phi_f=phi_f, phi_b=equal_interval_init(k_all, k_f, k_b), k_all=k_all, K=K
    )
    f, wts = config.nodes()
    two_pi_t0 = 2.0 * np.pi * config.t0
    c1 = 8.0 * np.pi * config.t0 / K**2
    c2 = 4.0 * two_pi_t0**2 / K**2

    prev_delta = np.zeros(k_b)
    history = []
    best_power = math.inf
    best_phi_b = state.phi_b.copy()
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iters + 1):
        w = boundary_weights(state.phi_b, k_all, k_f)
        phases_b = np.exp(1j * two_pi_t0 * np.outer(f, state.phi_b))
        phases_half = np.exp(1j * two_pi_t0 * np.outer(f, state.half()))
        v1 = c1 * (phases_b * (wts * f)[:, None]).T @ np.conj(phases_half)
        v2 = c2 * (phases_b * (wts * f**2)[:, None]).T @ np.conj(phases_b)
        system = np.real(v2) + config.step_weight_a * np.diag(w)
        rhs = np.imag(v1).sum(axis=1)
        try:
            delta = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularUpdate("update linear system is singular") from exc
        if not np.isfinite(delta).all():
            raise SingularUpdate("update produced non-finite perturbation")

        state.phi_b = state.phi_b + delta
        power = sidelobe_power(state.half(), config)
        history.append(power)
        if power < best_power:
            best_power = power
            best_phi_b = state.phi_b.copy()
        if np.max(np.abs(delta - prev_delta)) < config.convergence_eps:
            converged = True
            break
        prev_delta = delta

    if not converged:
        state.phi_b = best_phi_b

    rounded = _round_free_block(state.phi_b, k_all, k_f)
    schedule = _assemble_full(phi_f, rounded, k_all, config.t0)
    return DesignResult(
        schedule=schedule,
        iterations=iterations,
        history=np.asarray(history),
        converged=converged,
        half=state,
        measured_mainlobe_hz=_measure_mainlobe(schedule),
    )


def _measure_mainlobe(schedule: SymbolSchedule) -> float | None:
    from .analysis import mainlobe_width
    from .errors import GratingLobes

    try:
        return mainlobe_width(schedule)
    except GratingLobes:
        return None
