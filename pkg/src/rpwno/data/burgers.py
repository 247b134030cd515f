"""Viscous Burgers equation on the periodic unit interval.

Fourier pseudo-spectral discretisation of ``u_t + (u^2 / 2)_x = nu u_xx``
with 2/3-rule dealiasing and classical RK4 in time. The spectral state is
kept inside the dealiased band from the first step, which makes the
discrete nonlinear term conserve both the mean and the energy exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# RK4 stability interval on the negative real axis
RK4_REAL_LIMIT = 2.785


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class BurgersConfig:
    n: int = 128
    viscosity: float = 0.01
    final_time: float = 1.0
    dt: float = 1e-4

    def __post_init__(self):
        if self.viscosity <= 0:
            raise ValueError(f"viscosity must be positive, got {self.viscosity}")
        if self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even number >= 4, got {self.n}")
        if self.dt <= 0 or self.final_time <= 0:
            raise ValueError("dt and final_time must be positive")
        kmax = 2 * np.pi * (self.n // 3)
        if self.dt * self.viscosity * kmax ** 2 > RK4_REAL_LIMIT:
            raise ValueError(
                f"dt={self.dt} violates the diffusive RK4 bound dt * nu * kmax^2 <= {RK4_REAL_LIMIT}")

    @property
    def steps(self) -> int:
        return int(round(self.final_time / self.dt))


def _wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    freq = np.arange(n // 2 + 1)
    return 2 * np.pi * freq, (freq <= n // 3).astype(np.float64)


def solve_burgers(ic, config: BurgersConfig = BurgersConfig(), check_every: int = 200) -> np.ndarray:
    """Solution at ``final_time`` for initial conditions ``ic`` of shape ``[..., n]``."""
    u0 = np.asarray(ic, dtype=np.float64)
    if u0.shape[-1] != config.n:
        raise ValueError(f"initial condition has {u0.shape[-1]} points, config expects {config.n}")
    if not np.all(np.isfinite(u0)):
        raise SolverError("initial condition contains non-finite values")
    n = config.n
    k, mask = _wavenumbers(n)
    ik_half = -0.5j * k * mask
    lin = -config.viscosity * k ** 2
    dt = config.final_time / config.steps

    def rhs(v):
        u = np.fft.irfft(v, n=n)
        return ik_half * np.fft.rfft(u * u) + lin * v

    v = np.fft.rfft(u0) * mask
    for step in range(config.steps):
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * dt * k1)
        k3 = rhs(v + 0.5 * dt * k2)
        k4 = rhs(v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (step + 1) % check_every == 0 and not np.all(np.isfinite(v)):
            raise SolverError(f"Burgers state became non-finite at step {step + 1} (t={(step + 1) * dt:.4f})")
    out = np.fft.irfft(v, n=n)
    if not np.all(np.isfinite(out)):
        raise SolverError(f"Burgers state became non-finite by step {config.steps}")
    return out
