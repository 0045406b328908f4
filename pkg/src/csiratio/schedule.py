"""OFDM sensing-symbol schedules and their text serialization.

A schedule is the subset of OFDM symbol indexes (out of ``k_all`` available,
spaced ``t0`` seconds apart) that carries sensing pilots.  The text format is
one integer per line with ``# k_all=``, ``# K=`` and ``# T0_s=`` header
comments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleFormatError


@dataclass(frozen=True)
class SymbolSchedule:
    """Strictly increasing symbol indexes phi within [0, k_all - 1]."""

    phi: tuple[int, ...]
    k_all: int
    t0: float

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(int(p) for p in self.phi))
        if self.k_all < 1:
            raise ValueError("k_all must be a positive integer")
        if self.t0 <= 0:
            raise ValueError("symbol interval t0 must be positive")
        if len(self.phi) == 0:
            raise ValueError("schedule must contain at least one symbol")
        if len(self.phi) > self.k_all:
            raise ValueError("K cannot exceed k_all")
        if self.phi[0] < 0 or self.phi[-1] > self.k_all - 1:
            raise ValueError("symbol indexes must lie in [0, k_all - 1]")
        if any(b <= a for a, b in zip(self.phi, self.phi[1:])):
            raise ValueError("symbol indexes must be strictly increasing")

    @property
    def K(self) -> int:
        return len(self.phi)

    @property
    def nyquist_hz(self) -> float:
        """Unambiguous Doppler limit 1/(2*T0)."""
        return 0.5 / self.t0

    def phi_array(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=float)

    def is_center_symmetric(self) -> bool:
        """True when phi = [tilde; k_all-1-tilde], i.e. symmetric about (k_all-1)/2."""
        if self.K % 2:
            return False
        return all(
            self.phi[i] + self.phi[self.K - 1 - i] == self.k_all - 1
            for i in range(self.K // 2)
        )

    def half_indexes(self) -> np.ndarray:
        """Lower half of a center-symmetric schedule (the K/2 smallest indexes)."""
        if not self.is_center_symmetric():
            raise ValueError("schedule is not center-symmetric")
        return np.asarray(self.phi[: self.K // 2], dtype=float)


def save_schedule(schedule: SymbolSchedule, path: str | os.PathLike) -> None:
    """Write a schedule as one integer per line with header comments."""
    lines = [
        f"# k_all={schedule.k_all}",
        f"# K={schedule.K}",
        f"# T0_s={schedule.t0!r}",
    ]
    lines += [str(p) for p in schedule.phi]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_schedule(path: str | os.PathLike) -> SymbolSchedule:
    """Read a schedule written by :func:`save_schedule`."""
    header: dict[str, str] = {}
    phi: list[int] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    header[key.strip()] = value.strip()
                continue
            try:
                phi.append(int(line))
            except ValueError as exc:
                raise ScheduleFormatError(f"bad symbol index line {line!r}") from exc
    for key in ("k_all", "T0_s"):
        if key not in header:
            raise ScheduleFormatError(f"missing required header '# {key}='")
    try:
        k_all = int(header["k_all"])
        t0 = float(header["T0_s"])
    except ValueError as exc:
        raise ScheduleFormatError("malformed k_all / T0_s header") from exc
    if "K" in header and int(header["K"]) != len(phi):
        raise ScheduleFormatError(
            f"header K={header['K']} does not match {len(phi)} index lines"
        )
    try:
        return SymbolSchedule(phi=tuple(phi), k_all=k_all, t0=t0)
    except ValueError as exc:
        raise ScheduleFormatError(str(exc)) from exc
