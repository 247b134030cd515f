"""Steady Darcy flow ``-div(a grad u) = f`` on the unit square, ``u = 0`` on the boundary.

Cell-centred five-point finite volumes: interior faces use the harmonic mean
of the two adjacent permeabilities, boundary faces the cell's own value over
half a cell. The SPD system is solved by Jacobi-preconditioned conjugate
gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .burgers import SolverError


@dataclass(frozen=True)
class DarcyConfig:
    forcing: float = 1.0
    rtol: float = 1e-10
    maxiter: int = 20000


def cell_centres(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def assemble(a: np.ndarray) -> sp.csr_matrix:
    r, c = a.shape
    hy, hx = 1.0 / r, 1.0 / c
    idx = np.arange(r * c).reshape(r, c)
    diag = np.zeros((r, c))
    rows, cols, vals = [], [], []

    def faces(a1, a2, i1, i2, geom):
        t = geom * 2 * a1 * a2 / (a1 + a2)
        rows.extend([i1.ravel(), i2.ravel()])
        cols.extend([i2.ravel(), i1.ravel()])
        vals.extend([-t.ravel(), -t.ravel()])
        return t

    tx = faces(a[:, :-1], a[:, 1:], idx[:, :-1], idx[:, 1:], hy / hx)
    diag[:, :-1] += tx
    diag[:, 1:] += tx
    ty = faces(a[:-1, :], a[1:, :], idx[:-1, :], idx[1:, :], hx / hy)
    diag[:-1, :] += ty
    diag[1:, :] += ty
    # Dirichlet boundary faces at half-cell distance
    diag[:, 0] += 2 * a[:, 0] * hy / hx
    diag[:, -1] += 2 * a[:, -1] * hy / hx
    diag[0, :] += 2 * a[0, :] * hx / hy
    diag[-1, :] += 2 * a[-1, :] * hx / hy
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(r * c, r * c))


def solve_darcy(a, config: DarcyConfig = DarcyConfig()) -> np.ndarray:
    """Pressure at cell centres for permeability ``a`` of shape ``[r, c]``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"permeability must be 2D, got shape {a.shape}")
    if not np.all(a > 0):
        raise ValueError("permeability must be strictly positive")
    r, c = a.shape
    A = assemble(a)
    b = np.full(r * c, config.forcing / (r * c))
    M = sp.diags(1.0 / A.diagonal())
    u, info = cg(A, b, rtol=config.rtol, atol=0.0, maxiter=config.maxiter, M=M)
    res = np.linalg.norm(b - A @ u) / np.linalg.norm(b)
    if info != 0 or res > 10 * config.rtol:
        raise SolverError(f"CG did not converge (info={info}, relative residual {res:.2e})")
    return u.reshape(r, c)


def value_at(u: np.ndarray, x: float, y: float) -> float:
    """Bilinear interpolation of a cell-centred field; ``x`` indexes columns, ``y`` rows."""
    r, c = u.shape
    fx = np.clip(x * c - 0.5, 0, c - 1)
    fy = np.clip(y * r - 0.5, 0, r - 1)
    j0, i0 = min(int(fx), c - 2), min(int(fy), r - 2)
    tx, ty = fx - j0, fy - i0
    return float((1 - ty) * ((1 - tx) * u[i0, j0] + tx * u[i0, j0 + 1])
                 + ty * ((1 - tx) * u[i0 + 1, j0] + tx * u[i0 + 1, j0 + 1]))
