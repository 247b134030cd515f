"""Randomized-prior WNO members, ensemble training and prediction statistics.

Each member pairs a trainable WNO with a frozen, independently initialised
twin of the same architecture. The member output is
``trainable(x) + beta * prior(x)``; only the trainable half is optimised.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .model import WnoConfig, WnoModel, wno_forward

log = logging.getLogger(__name__)

CI_Z = 1.96


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.loss = epoch, batch, loss


class EnsembleTrainingError(RuntimeError):
    def __init__(self, failures: dict[int, BaseException]):
        detail = "; ".join(f"member {i}: {e}" for i, e in sorted(failures.items()))
        super().__init__(f"{len(failures)} ensemble member(s) failed: {detail}")
        self.failures = failures


def member_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (trainable init, prior init, data shuffling) generators for one seed."""
    init, prior, shuffle = np.random.SeedSequence(int(seed)).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(prior), np.random.default_rng(shuffle)


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_step: int = 50
    lr_gamma: float = 0.5
    cache_prior: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_step < 1:
            raise ValueError(f"lr_step must be >= 1, got {self.lr_step}")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_gamma ** (epoch // self.lr_step)


class Normalizer:
    """Pointwise Gaussian scaling fitted over the sample axis."""

    def __init__(self, mean: np.ndarray, std: np.ndarray, eps: float = 1e-6):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.eps = eps

    @classmethod
    def fit(cls, a: np.ndarray, eps: float = 1e-6) -> "Normalizer":
        return cls(a.mean(axis=0), a.std(axis=0), eps)

    @classmethod
    def identity(cls, shape) -> "Normalizer":
        return cls(np.zeros(shape), np.ones(shape), 0.0)

    @property
    def scale(self) -> np.ndarray:
        return self.std + self.eps

    def encode(self, a: np.ndarray) -> np.ndarray:
        return (a - self.mean) / self.scale

    def decode(self, a):
        if isinstance(a, Tensor):
            return ag.add(ag.mul(a, self.scale), self.mean)
        return a * self.scale + self.mean


@dataclass
class RpWno:
    trainable: WnoModel
    prior: WnoModel
    beta: float
    seed: int

    @classmethod
    def create(cls, config: WnoConfig, seed: int, beta: float = 1.0) -> "RpWno":
        if beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        init_rng, prior_rng, _ = member_streams(seed)
        return cls(WnoModel.init(config, init_rng), WnoModel.init(config, prior_rng, trainable=False),
                   float(beta), int(seed))

    def __post_init__(self):
        if self.trainable.config != self.prior.config:
            raise ValueError("trainable and prior networks must share one configuration")

    @property
    def config(self) -> WnoConfig:
        return self.trainable.config


@dataclass
class Ensemble:
    members: list[RpWno]
    allow_duplicate_seeds: bool = False

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError(f"an ensemble needs at least 2 members, got {len(self.members)}")
        cfg, beta = self.members[0].config, self.members[0].beta
        if any(m.config != cfg or m.beta != beta for m in self.members):
            raise ValueError("all ensemble members must share one config and one beta")
        seeds = [m.seed for m in self.members]
        if not self.allow_duplicate_seeds and len(set(seeds)) != len(seeds):
            raise ValueError(f"member seeds must be pairwise distinct, got {seeds}")

    @classmethod
    def create(cls, config: WnoConfig, seeds, beta: float = 1.0, allow_duplicate_seeds: bool = False) -> "Ensemble":
        return cls([RpWno.create(config, s, beta) for s in seeds], allow_duplicate_seeds)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def config(self) -> WnoConfig:
        return self.members[0].config

    @property
    def beta(self) -> float:
        return self.members[0].beta


def _prior_output(x: np.ndarray, prior: WnoModel) -> np.ndarray:
    # per-sample evaluation keeps the result independent of batch composition
    return np.concatenate([wno_forward(x[i:i + 1], prior).data for i in range(len(x))], axis=0)


def rp_forward(x, member: RpWno) -> Tensor:
    """``trainable(x) + beta * prior(x)``; the prior never enters the gradient tape."""
    out = wno_forward(x, member.trainable)
    if member.beta == 0.0:
        return out
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return ag.add(out, member.beta * _prior_output(x, member.prior))


def precompute_prior_outputs(x: np.ndarray, member: RpWno) -> np.ndarray:
    """Frozen-network outputs for every training sample, computed once."""
    return _prior_output(np.asarray(x, dtype=np.float64), member.prior)


def relative_l2_loss(pred, truth) -> Tensor:
    """Batch mean of per-sample ``||pred_i - truth_i|| / ||truth_i||``."""
    pred = ag.as_tensor(pred)
    truth = np.asarray(truth.data if isinstance(truth, Tensor) else truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ag.ShapeError(f"relative_l2_loss: prediction {pred.shape} vs truth {truth.shape}")
    s = truth.shape[0]
    diff = (pred.data - truth).reshape(s, -1)
    tnorm = np.linalg.norm(truth.reshape(s, -1), axis=1)
    zero = np.flatnonzero(tnorm == 0)
    if zero.size:
        raise ValueError(f"relative_l2_loss: truth sample {int(zero[0])} has zero norm")
    dnorm = np.linalg.norm(diff, axis=1)
    value = np.mean(dnorm / tnorm)

    def _bw(g):
        safe = np.where(dnorm > 0, dnorm, 1.0)
        coef = np.where(dnorm > 0, 1.0 / (s * safe * tnorm), 0.0)
        ag.accumulate(pred, (g * coef[:, None] * diff).reshape(pred.shape), owned=True)

    return ag.custom_op(np.asarray(value), (pred,), _bw)


def fit_network(model: WnoModel, x: np.ndarray, y: np.ndarray, config: TrainConfig,
                shuffle_rng: np.random.Generator, *, y_normalizer: Normalizer | None = None,
                prior: WnoModel | None = None, beta: float = 0.0, prior_cache: np.ndarray | None = None,
                label: str = "") -> list[float]:
    """Minibatch Adam on the relative L2 loss; returns per-epoch mean training loss.

    When ``beta`` is nonzero the loss is computed on the combined output
    ``model(x) + beta * prior(x)``, with prior outputs taken from
    ``prior_cache`` if given, otherwise evaluated per batch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise ValueError("training set is empty")
    if len(y) != n:
        raise ValueError(f"inputs have {n} samples but outputs have {len(y)}")
    if prior_cache is not None and len(prior_cache) != n:
        raise ValueError(f"prior cache holds {len(prior_cache)} entries for {n} training samples")
    if beta != 0.0 and prior is None and prior_cache is None:
        raise ValueError("beta != 0 requires a prior network or a prior cache")
    params = model.parameters()
    state = ag.AdamState.create(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    history = []
    for epoch in range(config.epochs):
        state.lr = config.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            xb = x[idx]
            with ag.Tape() as tape:
                out = wno_forward(xb, model)
                if beta != 0.0:
                    prior_out = prior_cache[idx] if prior_cache is not None else _prior_output(xb, prior)
                    out = ag.add(out, beta * prior_out)
                if y_normalizer is not None:
                    out = y_normalizer.decode(out)
                loss = relative_l2_loss(out, y[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, b, value)
            ag.zero_grad(params)
            ag.backward(loss, tape)
            ag.adam_step(params, state)
            total += value * len(idx)
        history.append(total / n)
        if label and (epoch + 1) % max(1, config.epochs // 10) == 0:
            log.info("%s epoch %d/%d loss %.5f", label, epoch + 1, config.epochs, history[-1])
    return history


def train_member(member: RpWno, x: np.ndarray, y: np.ndarray, config: TrainConfig,
                 y_normalizer: Normalizer | None = None, label: str = "") -> list[float]:
    """Train one randomized-prior member in place; returns its loss history."""
    _, _, shuffle_rng = member_streams(member.seed)
    cache = None
    if member.beta != 0.0 and config.cache_prior:
        cache = precompute_prior_outputs(x, member)
    return fit_network(member.trainable, x, y, config, shuffle_rng, y_normalizer=y_normalizer,
                       prior=member.prior, beta=member.beta, prior_cache=cache, label=label)


def worker_count(n_jobs: int | None, n_tasks: int) -> int:
    """Threads to use: ``n_jobs`` (-1 for all tasks), capped by ``RPWNO_THREADS``."""
    if n_jobs is None or n_jobs == 1:
        workers = 1
    elif n_jobs < 0:
        workers = n_tasks
    else:
        workers = n_jobs
    cap = os.environ.get("RPWNO_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, min(workers, n_tasks))


def train_ensemble(ensemble: Ensemble, x: np.ndarray, y: np.ndarray, config: TrainConfig,
                   y_normalizer: Normalizer | None = None, n_jobs: int | None = None) -> list[list[float]]:
    """Train every member independently, serially or on a thread pool.

    Members share nothing, so the result does not depend on scheduling. If
    any member fails the others still finish; the failures are then raised
    together as :class:`EnsembleTrainingError`.
    """
    def run(i: int):
        return train_member(ensemble.members[i], x, y, config, y_normalizer, label=f"member {i}")

    n = ensemble.n_members
    workers = worker_count(n_jobs, n)
    results: dict[int, list[float]] = {}
    failures: dict[int, BaseException] = {}
    if workers == 1:
        for i in range(n):
            try:
                results[i] = run(i)
            except Exception as exc:  # noqa: BLE001 - reported per member below
                failures[i] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(run, i) for i in range(n)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures[i] = exc
    if failures:
        raise EnsembleTrainingError(failures)
    return [results[i] for i in range(n)]


def predict_member(member: RpWno, x: np.ndarray, y_normalizer: Normalizer | None = None,
                   batch_size: int = 64) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    chunks = []
    for start in range(0, len(x), batch_size):
        chunks.append(rp_forward(x[start:start + batch_size], member).data)
    out = np.concatenate(chunks, axis=0)
    return y_normalizer.decode(out) if y_normalizer is not None else out


@dataclass
class PredictionStats:
    mean: np.ndarray
    std: np.ndarray
    lower95: np.ndarray = field(init=False)
    upper95: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lower95 = self.mean - CI_Z * self.std
        self.upper95 = self.mean + CI_Z * self.std


def ensemble_stats(predictions) -> PredictionStats:
    """Elementwise mean and population standard deviation (divisor ``n_c``) over axis 0."""
    P = np.asarray(predictions, dtype=np.float64)
    n_c = P.shape[0]
    if n_c < 2:
        raise ValueError(f"ensemble statistics need at least 2 member predictions, got {n_c}")
    mean = P.sum(axis=0) / n_c
    std = np.sqrt(((P - mean) ** 2).sum(axis=0) / n_c)
    return PredictionStats(mean, std)


def predict_stats(ensemble: Ensemble, x: np.ndarray, y_normalizer: Normalizer | None = None) -> PredictionStats:
    return ensemble_stats([predict_member(m, x, y_normalizer) for m in ensemble.members])
