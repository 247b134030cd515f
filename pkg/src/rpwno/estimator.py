"""scikit-learn style estimators wrapping the WNO and its randomized-prior ensemble.

``X`` holds input functions sampled on a regular grid, shaped
``(n_samples, *grid)`` for a single input function or
``(n_samples, *grid, n_functions)``. ``y`` is ``(n_samples, *grid)`` or
``(n_samples, *grid, 1)``; predictions come back in the same layout as the
``y`` seen in ``fit``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted

from .ensemble import (
    Ensemble,
    Normalizer,
    PredictionStats,
    RpWno,
    TrainConfig,
    ensemble_stats,
    fit_network,
    member_streams,
    predict_member,
    train_ensemble,
)
from .model import WnoConfig, WnoModel, append_grid


def _as_fields(X, name: str) -> np.ndarray:
    return check_array(X, allow_nd=True, dtype=np.float64, ensure_min_features=1, input_name=name)


class _WnoBase(RegressorMixin, BaseEstimator):
    """Shared validation, normalization and config plumbing."""

    def _split_shapes(self, X: np.ndarray, fitting: bool) -> tuple[int, tuple[int, ...], int]:
        if fitting:
            dims = self.spatial_dims
            if dims is None:
                if X.ndim not in (2, 3):
                    raise ValueError(
                        f"cannot infer spatial_dims from X with shape {X.shape}; set spatial_dims")
                dims = X.ndim - 1
        else:
            dims = self.config_.spatial_dims
        if dims not in (1, 2):
            raise ValueError(f"spatial_dims must be 1 or 2, got {dims}")
        if X.ndim == dims + 1:
            n_fn = 1
        elif X.ndim == dims + 2:
            n_fn = X.shape[-1]
        else:
            raise ValueError(f"X with shape {X.shape} does not match spatial_dims={dims}")
        return dims, tuple(X.shape[1:1 + dims]), n_fn

    def _inputs(self, X, fitting: bool = False) -> np.ndarray:
        X = _as_fields(X, "X")
        dims, grid, n_fn = self._split_shapes(X, fitting)
        if not fitting:
            if grid != self.config_.grid or n_fn + dims != self.config_.in_channels:
                raise ValueError(
                    f"incompatible input: grid {grid} with {n_fn} function(s), fitted on grid "
                    f"{self.config_.grid} with {self.config_.in_channels - dims} function(s)")
        return X.reshape(X.shape[0], *grid, n_fn)

    def _targets(self, y, grid: tuple[int, ...], n: int) -> np.ndarray:
        y = _as_fields(y, "y")
        if len(y) != n:
            raise ValueError(f"X has {n} samples but y has {len(y)}")
        if y.shape[1:] == grid:
            self.y_channel_axis_ = False
        elif y.shape[1:] == (*grid, 1):
            self.y_channel_axis_ = True
        else:
            raise ValueError(f"y with shape {y.shape} does not match grid {grid}")
        return y.reshape(n, *grid, 1)

    def _prepare_fit(self, X, y):
        X = self._inputs(X, fitting=True)
        dims = self.spatial_dims or X.ndim - 2
        grid = X.shape[1:1 + dims]
        Y = self._targets(y, grid, len(X))
        overrides = {k: v for k, v in dict(
            width=self.width, num_blocks=self.n_blocks, wavelet_order=self.wavelet_order,
            levels=self.levels, proj_hidden=self.proj_hidden,
            learned_subbands=None if self.learned_subbands is None else tuple(self.learned_subbands),
        ).items() if v is not None}
        self.config_ = WnoConfig.default(dims, grid, n_functions=X.shape[-1], **overrides)
        if self.normalize:
            self.x_normalizer_ = Normalizer.fit(X)
            self.y_normalizer_ = Normalizer.fit(Y)
        else:
            self.x_normalizer_ = Normalizer.identity(X.shape[1:])
            self.y_normalizer_ = Normalizer.identity(Y.shape[1:])
        return self._encode(X), Y

    def _encode(self, X: np.ndarray) -> np.ndarray:
        return append_grid(self.x_normalizer_.encode(X), self.config_.spatial_dims)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           lr_step=self.lr_step, lr_gamma=self.lr_gamma,
                           cache_prior=getattr(self, "cache_prior", True))

    def _output(self, a: np.ndarray) -> np.ndarray:
        return a if self.y_channel_axis_ else a[..., 0]

    def score(self, X, y, sample_weight=None):
        """R^2 of the flattened fields."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        return r2_score(y.reshape(n, -1), pred.reshape(n, -1), sample_weight=sample_weight)


class WNORegressor(_WnoBase):
    """A single wavelet neural operator trained with the relative L2 loss.

    Parameters mirror :class:`RPWNORegressor`; ``random_state`` plays the role
    of a member seed, so ``WNORegressor(random_state=s)`` reproduces the
    trainable half of an ensemble member with seed ``s`` trained at ``beta=0``.
    """

    def __init__(self, width=64, n_blocks=4, wavelet_order=6, levels=None, learned_subbands=None,
                 proj_hidden=None, epochs=300, batch_size=20, learning_rate=1e-3, lr_step=50,
                 lr_gamma=0.5, normalize=True, spatial_dims=None, random_state=0, verbose=0):
        self.width = width
        self.n_blocks = n_blocks
        self.wavelet_order = wavelet_order
        self.levels = levels
        self.learned_subbands = learned_subbands
        self.proj_hidden = proj_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_step = lr_step
        self.lr_gamma = lr_gamma
        self.normalize = normalize
        self.spatial_dims = spatial_dims
        self.random_state = random_state
        self.verbose = verbose

    def fit(self, X, y):
        Xe, Y = self._prepare_fit(X, y)
        init_rng, _, shuffle_rng = member_streams(self.random_state)
        self.model_ = WnoModel.init(self.config_, init_rng)
        self.loss_history_ = fit_network(self.model_, Xe, Y, self._train_config(), shuffle_rng,
                                         y_normalizer=self.y_normalizer_,
                                         label="wno" if self.verbose else "")
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        Xe = self._encode(self._inputs(X))
        member = RpWno(self.model_, self.model_, 0.0, int(self.random_state))
        return self._output(predict_member(member, Xe, self.y_normalizer_))


class RPWNORegressor(_WnoBase):
    """Ensemble of randomized-prior wavelet neural operators.

    Parameters
    ----------
    n_members : int
        Ensemble size (at least 2).
    beta : float
        Scale of the frozen prior network's output.
    width, n_blocks, wavelet_order, levels, learned_subbands, proj_hidden
        Architecture; ``None`` selects the per-dimension defaults of
        :meth:`WnoConfig.default`.
    epochs, batch_size, learning_rate, lr_step, lr_gamma
        Adam schedule; the learning rate is multiplied by ``lr_gamma`` every
        ``lr_step`` epochs.
    normalize : bool
        Pointwise Gaussian scaling of inputs and outputs, fitted on the
        training set. The loss is always evaluated on physical outputs.
    seeds : sequence of int, optional
        Member seeds. Defaults to ``random_state + i``.
    cache_prior : bool
        Evaluate the frozen networks on the training set once, up front.
    n_jobs : int, optional
        Worker threads for member training (``-1``: one per member). The
        ``RPWNO_THREADS`` environment variable caps it.
    """

    def __init__(self, n_members=5, beta=1.0, width=64, n_blocks=4, wavelet_order=6, levels=None,
                 learned_subbands=None, proj_hidden=None, epochs=300, batch_size=20, learning_rate=1e-3,
                 lr_step=50, lr_gamma=0.5, normalize=True, spatial_dims=None, random_state=0, seeds=None,
                 cache_prior=True, n_jobs=None, verbose=0):
        self.n_members = n_members
        self.beta = beta
        self.width = width
        self.n_blocks = n_blocks
        self.wavelet_order = wavelet_order
        self.levels = levels
        self.learned_subbands = learned_subbands
        self.proj_hidden = proj_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_step = lr_step
        self.lr_gamma = lr_gamma
        self.normalize = normalize
        self.spatial_dims = spatial_dims
        self.random_state = random_state
        self.seeds = seeds
        self.cache_prior = cache_prior
        self.n_jobs = n_jobs
        self.verbose = verbose

    def member_seeds(self) -> list[int]:
        if self.seeds is not None:
            seeds = [int(s) for s in self.seeds]
            if len(seeds) != self.n_members:
                raise ValueError(f"got {len(seeds)} seeds for {self.n_members} members")
            return seeds
        return [int(self.random_state) + i for i in range(self.n_members)]

    def fit(self, X, y):
        Xe, Y = self._prepare_fit(X, y)
        seeds = self.member_seeds()
        self.ensemble_ = Ensemble.create(self.config_, seeds, self.beta,
                                         allow_duplicate_seeds=self.seeds is not None)
        self.loss_history_ = train_ensemble(self.ensemble_, Xe, Y, self._train_config(),
                                            self.y_normalizer_, n_jobs=self.n_jobs)
        return self

    def predict_members(self, X) -> np.ndarray:
        """Per-member predictions, shape ``(n_members, n_samples, *grid[, 1])``."""
        check_is_fitted(self, "ensemble_")
        Xe = self._encode(self._inputs(X))
        return np.stack([self._output(predict_member(m, Xe, self.y_normalizer_))
                         for m in self.ensemble_.members])

    def predict_stats(self, X) -> PredictionStats:
        return ensemble_stats(self.predict_members(X))

    def predict(self, X, return_std: bool = False):
        stats = self.predict_stats(X)
        return (stats.mean, stats.std) if return_std else stats.mean
