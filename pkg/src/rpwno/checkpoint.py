"""Save and restore fitted :class:`RPWNORegressor` ensembles (RPWC files).

The file uses the container layout of :mod:`rpwno.io`. Tensor names:

* ``x_norm/mean``, ``x_norm/std``, ``y_norm/mean``, ``y_norm/std``
* ``member{i}/trainable/{param}`` and ``member{i}/prior/{param}``

The JSON metadata carries the estimator parameters, the network config,
``beta``, member seeds and per-member training-loss histories.
"""
from __future__ import annotations

import numpy as np

from .ensemble import Ensemble, Normalizer, RpWno
from .estimator import RPWNORegressor
from .io import FORMAT_VERSION, read_container, write_container
from .model import WnoConfig, WnoModel

CHECKPOINT_MAGIC = b"RPWC"
# execution settings that do not affect the fitted model stay out of the file
_RUNTIME_PARAMS = ("n_jobs", "verbose")


def save_checkpoint(est: RPWNORegressor, path) -> None:
    ens = est.ensemble_
    meta = {
        "format_version": FORMAT_VERSION,
        "params": {k: v for k, v in est.get_params().items() if k not in _RUNTIME_PARAMS},
        "config": est.config_.to_dict(),
        "beta": ens.beta,
        "seeds": [m.seed for m in ens.members],
        "allow_duplicate_seeds": ens.allow_duplicate_seeds,
        "loss_history": est.loss_history_,
        "y_channel_axis": bool(est.y_channel_axis_),
        "norm_eps": [est.x_normalizer_.eps, est.y_normalizer_.eps],
    }
    tensors = {
        "x_norm/mean": est.x_normalizer_.mean,
        "x_norm/std": est.x_normalizer_.std,
        "y_norm/mean": est.y_normalizer_.mean,
        "y_norm/std": est.y_normalizer_.std,
    }
    for i, m in enumerate(ens.members):
        for part, net in (("trainable", m.trainable), ("prior", m.prior)):
            for name, arr in net.named_parameters().items():
                tensors[f"member{i}/{part}/{name}"] = arr
    write_container(path, CHECKPOINT_MAGIC, meta, tensors)


def _network(config: WnoConfig, tensors: dict, prefix: str, trainable: bool) -> WnoModel:
    net = WnoModel.init(config, 0, trainable=trainable)
    net.load_parameters({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})
    return net


def load_checkpoint(path) -> RPWNORegressor:
    _, meta, t = read_container(path, CHECKPOINT_MAGIC)
    params = dict(meta["params"])
    if params.get("seeds") is not None:
        params["seeds"] = list(params["seeds"])
    est = RPWNORegressor(**params)
    config = WnoConfig.from_dict(meta["config"])
    members = [
        RpWno(_network(config, t, f"member{i}/trainable/", True),
              _network(config, t, f"member{i}/prior/", False),
              float(meta["beta"]), int(seed))
        for i, seed in enumerate(meta["seeds"])
    ]
    x_eps, y_eps = meta["norm_eps"]
    est.config_ = config
    est.ensemble_ = Ensemble(members, bool(meta["allow_duplicate_seeds"]))
    est.x_normalizer_ = Normalizer(t["x_norm/mean"], t["x_norm/std"], x_eps)
    est.y_normalizer_ = Normalizer(t["y_norm/mean"], t["y_norm/std"], y_eps)
    est.y_channel_axis_ = bool(meta["y_channel_axis"])
    est.loss_history_ = [list(map(float, h)) for h in meta["loss_history"]]
    return est


def checkpoints_equal(a: RPWNORegressor, b: RPWNORegressor) -> bool:
    ma, mb = a.ensemble_.members, b.ensemble_.members
    if len(ma) != len(mb):
        return False
    return all(
        x.trainable.checksum() == y.trainable.checksum() and x.prior.checksum() == y.prior.checksum()
        for x, y in zip(ma, mb)
    ) and np.array_equal(a.y_normalizer_.mean, b.y_normalizer_.mean)
