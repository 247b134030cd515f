"""Wavelet neural operator: lifting layer, wavelet blocks and projection head.

Data is channels-last throughout: ``[batch, *grid, channels]``.

Each wavelet block sums two branches. The wavelet-mapping branch takes a
multi-level DWT, mixes channels pointwise on the learned final-level
subbands, and inverts the DWT. Finer-level details and unlearned subbands
pass through untouched. The convolution-mapping branch is a 1x1
convolution. Because the periodized transform is orthogonal, the wavelet
branch reduces to::

    out = x + sum_b S_b^T (mix_b(S_b x) - S_b x)

where ``S_b`` is the analysis operator onto final-level subband ``b``. That
is how it is evaluated here, with an analytic vector-Jacobian product.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .wavelet import SUBBANDS_1D, SUBBANDS_2D, coarse_analysis_matrices, daubechies_filters, max_levels

APPROX_BAND = {1: "approx", 2: "LL"}


@dataclass(frozen=True)
class WnoConfig:
    spatial_dims: int
    grid: tuple[int, ...]
    in_channels: int
    width: int = 64
    num_blocks: int = 4
    wavelet_order: int = 6
    levels: int = 4
    learned_subbands: tuple[str, ...] = ("approx", "detail")
    proj_hidden: int = 128
    out_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        object.__setattr__(self, "learned_subbands", tuple(self.learned_subbands))
        self.validate()

    def validate(self) -> None:
        if self.spatial_dims not in (1, 2):
            raise ValueError(f"spatial_dims must be 1 or 2, got {self.spatial_dims}")
        if len(self.grid) != self.spatial_dims:
            raise ValueError(f"grid {self.grid} does not have {self.spatial_dims} extents")
        if self.in_channels <= self.spatial_dims:
            raise ValueError(
                f"in_channels={self.in_channels} must count the input functions plus "
                f"{self.spatial_dims} grid channel(s)"
            )
        if self.width <= self.in_channels:
            raise ValueError(f"width ({self.width}) must exceed in_channels ({self.in_channels})")
        if self.num_blocks < 1 or self.proj_hidden < 1 or self.out_channels < 1:
            raise ValueError("num_blocks, proj_hidden and out_channels must be positive")
        daubechies_filters(self.wavelet_order)
        for g in self.grid:
            if g % 2:
                raise ValueError(f"grid extent {g} is odd; periodized transforms need even extents")
            if not 1 <= self.levels <= max_levels(g):
                raise ValueError(f"levels={self.levels} infeasible for grid extent {g}")
        allowed = SUBBANDS_1D if self.spatial_dims == 1 else SUBBANDS_2D
        bands = self.learned_subbands
        if not bands:
            raise ValueError("learned_subbands must be nonempty")
        unknown = set(bands) - set(allowed)
        if unknown:
            raise ValueError(f"unknown subbands {sorted(unknown)}; choose from {allowed}")
        if len(set(bands)) != len(bands):
            raise ValueError(f"duplicate subbands in {bands}")
        if APPROX_BAND[self.spatial_dims] not in bands:
            raise ValueError("learned_subbands must contain the approximation band")

    @property
    def coarse_shape(self) -> tuple[int, ...]:
        return tuple(g >> self.levels for g in self.grid)

    @classmethod
    def default(cls, spatial_dims: int, grid, n_functions: int = 1, **overrides) -> "WnoConfig":
        """Desk-scale defaults modelled on the Burgers (1D) and Darcy (2D) setups."""
        grid = tuple(int(g) for g in np.atleast_1d(grid))
        if len(grid) == 1 and spatial_dims == 2:
            grid = grid * 2
        log2 = int(np.log2(min(grid)))
        if spatial_dims == 1:
            base = dict(levels=max(1, min(8, log2 - 2)), learned_subbands=SUBBANDS_1D, proj_hidden=128)
        else:
            base = dict(levels=max(1, min(4, log2 - 2)), learned_subbands=("LL", "HL"), proj_hidden=192)
        base.update(overrides)
        return cls(spatial_dims=spatial_dims, grid=grid, in_channels=n_functions + spatial_dims, **base)

    def to_dict(self) -> dict:
        return {
            "spatial_dims": self.spatial_dims,
            "grid": list(self.grid),
            "in_channels": self.in_channels,
            "width": self.width,
            "num_blocks": self.num_blocks,
            "wavelet_order": self.wavelet_order,
            "levels": self.levels,
            "learned_subbands": list(self.learned_subbands),
            "proj_hidden": self.proj_hidden,
            "out_channels": self.out_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WnoConfig":
        return cls(**{**d, "grid": tuple(d["grid"]), "learned_subbands": tuple(d["learned_subbands"])})


def param_count(config: WnoConfig) -> int:
    """Number of scalar weights, as a closed-form function of the config."""
    p, h = config.width, config.proj_hidden
    coarse = int(np.prod(config.coarse_shape))
    lift = config.in_channels * p + p
    block = len(config.learned_subbands) * p * p * coarse + p * p + p
    proj = p * h + h + h * config.out_channels + config.out_channels
    return lift + config.num_blocks * block + proj


@dataclass
class WaveletBlockParams:
    subband_weights: dict[str, Parameter]
    cmc_W: Parameter
    cmc_b: Parameter

    def parameters(self) -> list[Parameter]:
        return [*self.subband_weights.values(), self.cmc_W, self.cmc_b]


def _uniform(rng: np.random.Generator, shape, fan_in: int, name: str, trainable: bool) -> Parameter:
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), name=name, requires_grad=trainable)


@dataclass
class WnoModel:
    config: WnoConfig
    lift_W: Parameter
    lift_b: Parameter
    blocks: list[WaveletBlockParams]
    proj1_W: Parameter
    proj1_b: Parameter
    proj2_W: Parameter
    proj2_b: Parameter
    trainable: bool = True

    @classmethod
    def init(cls, config: WnoConfig, rng: np.random.Generator | int, trainable: bool = True) -> "WnoModel":
        rng = np.random.default_rng(rng)
        p, h = config.width, config.proj_hidden

        def u(shape, fan_in, name):
            return _uniform(rng, shape, fan_in, name, trainable)

        lift_W = u((config.in_channels, p), config.in_channels, "lift.W")
        lift_b = u((p,), config.in_channels, "lift.b")
        blocks = []
        for i in range(config.num_blocks):
            weights = {
                band: u((p, p, *config.coarse_shape), p, f"blocks.{i}.wmc.{band}")
                for band in config.learned_subbands
            }
            blocks.append(WaveletBlockParams(
                weights, u((p, p), p, f"blocks.{i}.cmc.W"), u((p,), p, f"blocks.{i}.cmc.b")))
        proj1_W = u((p, h), p, "proj1.W")
        proj1_b = u((h,), p, "proj1.b")
        proj2_W = u((h, config.out_channels), h, "proj2.W")
        proj2_b = u((config.out_channels,), h, "proj2.b")
        return cls(config, lift_W, lift_b, blocks, proj1_W, proj1_b, proj2_W, proj2_b, trainable)

    def parameters(self) -> list[Parameter]:
        params = [self.lift_W, self.lift_b]
        for blk in self.blocks:
            params.extend(blk.parameters())
        params.extend([self.proj1_W, self.proj1_b, self.proj2_W, self.proj2_b])
        return params

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise KeyError(f"missing parameter {p.name!r}")
            value = np.asarray(arrays[p.name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"parameter {p.name!r}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()
            p.zero_grad()

    def zero_grad(self) -> None:
        ag.zero_grad(self.parameters())

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def __call__(self, x) -> Tensor:
        return wno_forward(x, self)


def grid_channels(grid: tuple[int, ...]) -> np.ndarray:
    """Normalized coordinates in [0, 1], shape ``[*grid, len(grid)]``."""
    axes = [np.linspace(0.0, 1.0, n) for n in grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def append_grid(x: np.ndarray, spatial_dims: int) -> np.ndarray:
    """Concatenate grid-coordinate channels to ``x`` of shape ``[s, *grid, n_fn]``."""
    x = np.asarray(x, dtype=np.float64)
    grid = x.shape[1:1 + spatial_dims]
    g = np.broadcast_to(grid_channels(grid), (x.shape[0], *grid, spatial_dims))
    return np.concatenate([x, g], axis=-1)


@functools.lru_cache(maxsize=32)
def band_operators(n_dims: int, grid: tuple[int, ...], order: int, levels: int) -> dict[str, tuple[np.ndarray, ...]]:
    """Per-axis final-level analysis matrices for each subband."""
    filt = daubechies_filters(order)
    per_axis = [coarse_analysis_matrices(n, filt, levels) for n in grid]
    if n_dims == 1:
        A, D = per_axis[0]
        return {"approx": (A,), "detail": (D,)}
    (Ar, Dr), (Ac, Dc) = per_axis
    return {"LL": (Ar, Ac), "LH": (Ar, Dc), "HL": (Dr, Ac), "HH": (Dr, Dc)}


def _analyse(x: np.ndarray, mats: tuple[np.ndarray, ...]) -> np.ndarray:
    s, p = x.shape[0], x.shape[-1]
    if len(mats) == 1:
        return np.matmul(mats[0], x)
    R, C = mats
    r, c = x.shape[1:3]
    y = np.matmul(R, x.reshape(s, r, c * p)).reshape(s, R.shape[0], c, p)
    return np.matmul(C, y)


def _synthesise(c: np.ndarray, mats: tuple[np.ndarray, ...]) -> np.ndarray:
    s, p = c.shape[0], c.shape[-1]
    if len(mats) == 1:
        return np.matmul(mats[0].T, c)
    R, C = mats
    y = np.matmul(C.T, c)  # [s, mr, c, p]
    mr, cc = y.shape[1:3]
    return np.matmul(R.T, y.reshape(s, mr, cc * p)).reshape(s, R.shape[1], cc, p)


def _mix_weight(W: np.ndarray) -> np.ndarray:
    # [p_in, p_out, *coarse] -> [M, p_in, p_out]
    p_in, p_out = W.shape[:2]
    return W.reshape(p_in, p_out, -1).transpose(2, 0, 1)


def _mix(c: np.ndarray, Wm: np.ndarray) -> np.ndarray:
    s, p = c.shape[0], c.shape[-1]
    cm = c.reshape(s, -1, p).transpose(1, 0, 2)  # [M, s, p]
    out = np.matmul(cm, Wm)
    return out.transpose(1, 0, 2).reshape(c.shape[:-1] + (Wm.shape[2],))


def lift(x, model: WnoModel) -> Tensor:
    x = ag.as_tensor(x)
    cfg = model.config
    if x.shape[-1] != cfg.in_channels:
        raise ag.ShapeError(
            f"lift: expected {cfg.in_channels} input channels (functions + grid), got shape {x.shape}"
        )
    return ag.dense(x, model.lift_W, model.lift_b)


def wmc_forward(x, block: WaveletBlockParams, config: WnoConfig) -> Tensor:
    """Wavelet-mapping component on ``[s, *grid, p]``."""
    x = ag.as_tensor(x)
    if x.shape[1:-1] != config.grid:
        raise ag.ShapeError(f"wmc: spatial extents {x.shape[1:-1]} do not match configured grid {config.grid}")
    ops = band_operators(config.spatial_dims, config.grid, config.wavelet_order, config.levels)
    bands = list(block.subband_weights.items())
    coefs, mixes = [], []
    out = x.data.copy()
    for band, W in bands:
        c = _analyse(x.data, ops[band])
        Wm = _mix_weight(W.data)
        coefs.append(c)
        mixes.append(Wm)
        out += _synthesise(_mix(c, Wm) - c, ops[band])

    def _bw(g):
        gx = g.copy() if x.requires_grad else None
        for (band, W), c, Wm in zip(bands, coefs, mixes):
            gb = _analyse(g, ops[band])
            s, p = c.shape[0], c.shape[-1]
            if W.requires_grad:
                cm = c.reshape(s, -1, p).transpose(1, 2, 0)  # [M, p, s]
                gm = gb.reshape(s, -1, gb.shape[-1]).transpose(1, 0, 2)  # [M, s, p]
                dW = np.matmul(cm, gm)  # [M, p_in, p_out]
                W._accumulate(np.ascontiguousarray(dW.transpose(1, 2, 0)).reshape(W.shape))
            if gx is not None:
                gx += _synthesise(_mix(gb, Wm.transpose(0, 2, 1)) - gb, ops[band])
        if gx is not None:
            x._accumulate(gx, owned=True)

    return ag.custom_op(out, (x, *[W for _, W in bands]), _bw)


def cmc_forward(x, block: WaveletBlockParams) -> Tensor:
    """Convolution-mapping component: a single kernel-size-one convolution."""
    return ag.conv1x1(ag.as_tensor(x), block.cmc_W, block.cmc_b)


def block_forward(x, block: WaveletBlockParams, config: WnoConfig, apply_activation: bool) -> Tensor:
    out = ag.add(wmc_forward(x, block, config), cmc_forward(x, block))
    return ag.gelu(out) if apply_activation else out


def project(x, model: WnoModel) -> Tensor:
    h = ag.gelu(ag.dense(ag.as_tensor(x), model.proj1_W, model.proj1_b))
    return ag.dense(h, model.proj2_W, model.proj2_b)


def wno_forward(x, model: WnoModel) -> Tensor:
    """Full operator: ``project(blocks(lift(x)))``; GeLU after every block but the last."""
    cfg = model.config
    x = ag.as_tensor(x)
    if x.ndim != cfg.spatial_dims + 2 or x.shape[1:-1] != cfg.grid:
        raise ag.ShapeError(f"expected input [batch, {', '.join(map(str, cfg.grid))}, channels], got {x.shape}")
    h = lift(x, model)
    n = len(model.blocks)
    for i, blk in enumerate(model.blocks):
        h = block_forward(h, blk, cfg, apply_activation=i < n - 1)
    return project(h, model)

