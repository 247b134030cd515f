"""Gaussian random fields with covariance ``scale * (-Laplacian + shift)^(-2)``.

Fields are synthesised in an orthonormal eigenbasis of the Laplacian: each
mode gets an independent normal coefficient with standard deviation
``sqrt(scale) / (eigenvalue + shift)``.

* 1D, periodic on [0, 1): Fourier modes ``1, sqrt2 cos(2 pi k x), sqrt2 sin(2 pi k x)``,
  eigenvalue ``(2 pi k)^2``, sampled at ``x_j = j / n``.
* 2D, zero-Neumann on the unit square: cosine modes
  ``c_k c_l cos(pi k x) cos(pi l y)`` with ``c_0 = 1``, ``c_k = sqrt2``,
  eigenvalue ``pi^2 (k^2 + l^2)``, sampled at cell centres ``(i + 1/2) / n``.

Both bases are orthonormal under the grid mean, so the discrete projection
of a sample onto a basis vector recovers that mode's coefficient exactly.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrfSpec:
    dimension: int
    grid: int
    scale: float
    shift: float
    exponent: float = -2.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.shift <= 0:
            raise ValueError(f"shift must be positive, got {self.shift}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.grid < 2 or self.grid % 2:
            raise ValueError(f"grid must be an even extent >= 2, got {self.grid}")

    def mode_std(self, eigenvalue):
        # covariance (lam + shift)^exponent -> std (lam + shift)^(exponent / 2)
        return np.sqrt(self.scale) * (np.asarray(eigenvalue, dtype=np.float64) + self.shift) ** (self.exponent / 2)


BURGERS_GRF = dict(dimension=1, scale=625.0, shift=25.0)
DARCY_GRF = dict(dimension=2, scale=1.0, shift=9.0)


def burgers_spec(grid: int) -> GrfSpec:
    return GrfSpec(grid=grid, **BURGERS_GRF)


def darcy_spec(grid: int) -> GrfSpec:
    return GrfSpec(grid=grid, **DARCY_GRF)


@functools.lru_cache(maxsize=8)
def periodic_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns are orthonormal (grid-mean) Fourier modes; returns (basis [n, n], eigenvalues [n])."""
    x = np.arange(n) / n
    cols, eig = [np.ones(n)], [0.0]
    for k in range(1, n // 2):
        cols.append(np.sqrt(2.0) * np.cos(2 * np.pi * k * x))
        cols.append(np.sqrt(2.0) * np.sin(2 * np.pi * k * x))
        eig += [(2 * np.pi * k) ** 2] * 2
    k = n // 2
    cols.append(np.cos(2 * np.pi * k * x))  # Nyquist: sine vanishes on the grid
    eig.append((2 * np.pi * k) ** 2)
    return np.stack(cols, axis=1), np.array(eig)


@functools.lru_cache(maxsize=8)
def neumann_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred cosine modes, orthonormal under the grid mean; returns (basis [n, n], k)."""
    x = (np.arange(n) + 0.5) / n
    k = np.arange(n)
    B = np.cos(np.pi * np.outer(x, k))
    B[:, 1:] *= np.sqrt(2.0)
    return B, k.astype(np.float64)


def sample_grf(spec: GrfSpec, count: int, rng) -> np.ndarray:
    """Draw ``count`` independent fields; shape ``[count, n]`` or ``[count, n, n]``."""
    rng = np.random.default_rng(rng)
    n = spec.grid
    if spec.dimension == 1:
        B, eig = periodic_basis(n)
        xi = rng.standard_normal((count, n)) * spec.mode_std(eig)
        return xi @ B.T
    B, k = neumann_basis(n)
    eig = np.pi ** 2 * (k[:, None] ** 2 + k[None, :] ** 2)
    xi = rng.standard_normal((count, n, n)) * spec.mode_std(eig)
    return np.einsum("ik,ckl,jl->cij", B, xi, B, optimize=True)


def psi_threshold(a_raw) -> np.ndarray:
    """Map positive values (and exact zeros) to 12, negative values to 3."""
    a_raw = np.asarray(a_raw, dtype=np.float64)
    return np.where(a_raw >= 0, 12.0, 3.0)
