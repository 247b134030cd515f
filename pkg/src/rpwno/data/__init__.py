"""Benchmark data: Gaussian random fields, Burgers and Darcy solvers, dataset containers."""
from .burgers import BurgersConfig, SolverError, solve_burgers
from .darcy import DarcyConfig, solve_darcy, value_at
from .dataset import DATASET_MAGIC, Dataset, build_dataset
from .grf import GrfSpec, burgers_spec, darcy_spec, psi_threshold, sample_grf

__all__ = ["BurgersConfig", "DATASET_MAGIC", "DarcyConfig", "Dataset", "GrfSpec", "SolverError", "build_dataset",
           "burgers_spec", "darcy_spec", "psi_threshold", "sample_grf", "solve_burgers", "solve_darcy", "value_at"]
