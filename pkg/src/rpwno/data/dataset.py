"""Paired input/output datasets for the Burgers and Darcy benchmarks."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..io import read_container, write_container
from .burgers import BurgersConfig, SolverError, solve_burgers
from .darcy import DarcyConfig, cell_centres, solve_darcy
from .grf import burgers_spec, darcy_spec, psi_threshold, sample_grf

DATASET_MAGIC = b"RPWD"
PROBLEMS = ("burgers", "darcy")
DEFAULT_GRID = {"burgers": 128, "darcy": 32}
# arrays are indexed [row, column]; in 2D rows run along y and columns along x
AXIS_NAMES = {1: ("x",), 2: ("y", "x")}


@dataclass
class Dataset:
    inputs: np.ndarray  # [s, *grid, n_fn]
    outputs: np.ndarray  # [s, *grid, 1]
    grids: list[np.ndarray]  # physical coordinates per axis, in [0, 1]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) != len(self.outputs):
            raise ValueError(f"{len(self.inputs)} inputs vs {len(self.outputs)} outputs")
        grid = self.inputs.shape[1:-1]
        if self.outputs.shape[1:-1] != grid or len(self.grids) != len(grid):
            raise ValueError("inputs, outputs and grid coordinates disagree on extents")
        for g, n in zip(self.grids, grid):
            if len(g) != n or np.any(np.diff(g) <= 0) or g.min() < 0 or g.max() > 1:
                raise ValueError("grid coordinates must be strictly increasing within [0, 1]")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.inputs.shape[1:-1]

    @property
    def problem(self) -> str:
        return self.metadata.get("problem", "")

    def subset(self, index) -> "Dataset":
        idx = np.arange(len(self))[index]
        meta = dict(self.metadata, count=len(idx))
        return Dataset(self.inputs[idx], self.outputs[idx], self.grids, meta)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.outputs, *self.grids):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        tensors = {"inputs": self.inputs, "outputs": self.outputs}
        tensors.update({f"grid{i}": g for i, g in enumerate(self.grids)})
        write_container(path, DATASET_MAGIC, self.metadata, tensors)

    @classmethod
    def load(cls, path) -> "Dataset":
        _, meta, t = read_container(path, DATASET_MAGIC)
        for key in ("inputs", "outputs"):
            if key not in t:
                raise ValueError(f"{path}: missing tensor {key!r}")
        ndim = t["inputs"].ndim - 2
        grids = [t[f"grid{i}"] for i in range(ndim)]
        ds = cls(t["inputs"], t["outputs"], grids, meta)
        if ds.problem == "darcy" and not np.all(np.isin(ds.inputs, (3.0, 12.0))):
            raise ValueError(f"{path}: Darcy permeability outside {{3, 12}}")
        return ds

    def export_sample_csv(self, index: int, path) -> None:
        """One sample as rows of coordinates, input function(s) and output."""
        x, y = self.inputs[index], self.outputs[index]
        axes = list(AXIS_NAMES[len(self.grids)])
        mesh = np.meshgrid(*self.grids, indexing="ij")
        n_fn = x.shape[-1]
        header = axes + ([f"input{i}" for i in range(n_fn)] if n_fn > 1 else ["input"]) + ["output"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for pos in np.ndindex(*self.grid_shape):
                w.writerow([repr(float(m[pos])) for m in mesh]
                           + [repr(float(v)) for v in x[pos]] + [repr(float(y[pos][0]))])


def _sample_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def build_dataset(problem: str, count: int, grid: int | None = None, seed: int = 0, *,
                  viscosity: float = 0.01, dt: float = 1e-4) -> Dataset:
    """Sample GRF inputs and solve each one; sample ``i`` depends only on ``(seed, i)``.

    Because every sample has its own derived seed, the first ``k`` samples of
    a larger dataset equal a ``k``-sample dataset with the same seed.
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    n = int(grid or DEFAULT_GRID[problem])
    rngs = _sample_rngs(seed, count)
    meta = {"problem": problem, "count": count, "grid": n, "seed": int(seed)}
    if problem == "burgers":
        spec = burgers_spec(n)
        cfg = BurgersConfig(n=n, viscosity=viscosity, dt=dt)
        ic = np.concatenate([sample_grf(spec, 1, r) for r in rngs])
        try:
            sol = solve_burgers(ic, cfg)
        except SolverError:
            # locate the offending sample
            for i in range(count):
                try:
                    solve_burgers(ic[i], cfg)
                except SolverError as exc:
                    raise SolverError(f"sample {i}: {exc}") from exc
            raise
        grids = [np.arange(n) / n]
        meta.update(grf={"scale": spec.scale, "shift": spec.shift, "exponent": spec.exponent,
                         "basis": "periodic-fourier"},
                    solver={"method": "pseudo-spectral-rk4", "dealias": "2/3", "viscosity": viscosity,
                            "dt": cfg.dt, "final_time": cfg.final_time})
        return Dataset(ic[..., None], sol[..., None], grids, meta)

    spec = darcy_spec(n)
    cfg = DarcyConfig()
    a = np.concatenate([psi_threshold(sample_grf(spec, 1, r)) for r in rngs])
    u = np.empty_like(a)
    for i in range(count):
        try:
            u[i] = solve_darcy(a[i], cfg)
        except SolverError as exc:
            raise SolverError(f"sample {i}: {exc}") from exc
    grids = [cell_centres(n), cell_centres(n)]
    meta.update(grf={"scale": spec.scale, "shift": spec.shift, "exponent": spec.exponent,
                     "basis": "neumann-cosine", "threshold": {"positive": 12.0, "negative": 3.0}},
                solver={"method": "fv5-harmonic-pcg", "rtol": cfg.rtol, "forcing": cfg.forcing,
                        "boundary": "dirichlet-zero"})
    return Dataset(a[..., None], u[..., None], grids, meta)
