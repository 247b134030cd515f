"""Command-line driver: dataset generation, ensemble training, evaluation and sweeps.

Every command takes an optional ``--config`` JSON file whose keys are
:class:`RunConfig` fields; explicit flags override it. The resolved config is
written next to the outputs, so any run can be repeated from that file and
its seed. Nothing time- or path-dependent goes into the artifacts, which keeps
reruns bitwise identical.

Output files (all CSV files carry a header row):

``generate``
    ``<out>/<problem>_n<count>_g<grid>_s<seed>.rpwd`` (or ``--name``).
``train``
    ``checkpoint.rpwc``, ``loss.csv`` (``member,seed,epoch,loss``), ``run.json``.
``eval``
    ``report.json``, ``fields.csv`` (``sample,<axes>,truth,mean,std,lower95,upper95``),
    ``per_sample.csv`` and one ``pdf_<k>.csv`` per probe point
    (``abscissa,predicted_density,truth_density``).
``sweep-tds``
    ``tds_trend.csv`` (``tds,mae,mean_std,rel_l2_percent,nmse_percent,coverage95``) and ``run.json``.
``sweep-beta``
    ``beta_sweep.csv`` (``beta,rel_l2_percent,mae,mean_std,nmse_percent,coverage95``) and ``run.json``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data.dataset import AXIS_NAMES, DEFAULT_GRID, PROBLEMS, Dataset, build_dataset
from .estimator import RPWNORegressor
from .metrics import empirical_pdf, evaluate, pdf_abscissae

log = logging.getLogger("rpwno")

LOSS_HEADER = ["member", "seed", "epoch", "loss"]
PDF_HEADER = ["abscissa", "predicted_density", "truth_density"]
METRIC_KEYS = ["mae", "mean_std", "rel_l2_percent", "nmse_percent", "coverage95"]
TDS_HEADER = ["tds"] + METRIC_KEYS
BETA_HEADER = ["beta", "rel_l2_percent", "mae", "mean_std", "nmse_percent", "coverage95"]

# RunConfig fields handed to the estimator unchanged
ESTIMATOR_FIELDS = ("n_members", "beta", "width", "n_blocks", "wavelet_order", "levels", "learned_subbands",
                    "proj_hidden", "epochs", "batch_size", "learning_rate", "lr_step", "lr_gamma", "normalize")


@dataclass
class RunConfig:
    problem: str = "burgers"
    count: int = 500
    grid: int | None = None
    viscosity: float = 0.01
    dt: float = 1e-4
    dataset: str | None = None
    test_dataset: str | None = None
    checkpoint: str | None = None
    train_count: int | None = None
    name: str | None = None
    out: str = "."
    seed: int = 0
    n_members: int = 5
    beta: float = 1.0
    width: int = 64
    n_blocks: int = 4
    wavelet_order: int = 6
    levels: int | None = None
    learned_subbands: list[str] | None = None
    proj_hidden: int | None = None
    epochs: int = 300
    batch_size: int = 20
    learning_rate: float = 1e-3
    lr_step: int = 50
    lr_gamma: float = 0.5
    normalize: bool = True
    parallel: bool = False
    points: str = ""
    pdf_points: int = 200
    tds: list[int] = field(default_factory=lambda: [100, 400])
    betas: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 100.0])

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        positive = ("count", "n_members", "width", "n_blocks", "epochs", "batch_size", "lr_step", "pdf_points")
        for key in positive:
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.n_members < 2:
            raise ValueError(f"n_members must be at least 2, got {self.n_members}")
        if not 1 <= self.wavelet_order <= 10:
            raise ValueError(f"wavelet_order must be in 1..10, got {self.wavelet_order}")
        if self.beta < 0 or any(b < 0 for b in self.betas):
            raise ValueError("beta values must be nonnegative")
        if not (self.learning_rate > 0 and 0 < self.lr_gamma <= 1):
            raise ValueError("learning_rate must be positive and lr_gamma in (0, 1]")
        if self.viscosity <= 0 or self.dt <= 0:
            raise ValueError("viscosity and dt must be positive")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError(f"seed must fit in u64, got {self.seed}")
        if any(t < 1 for t in self.tds):
            raise ValueError(f"tds values must be positive, got {self.tds}")
        if self.train_count is not None and self.train_count < 1:
            raise ValueError(f"train_count must be positive, got {self.train_count}")

    @classmethod
    def from_sources(cls, path: str | None, overrides: dict) -> "RunConfig":
        base = {}
        if path:
            base = json.loads(Path(path).read_text())
            unknown = set(base) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        base.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def estimator(self, **changes) -> RPWNORegressor:
        params = {k: getattr(self, k) for k in ESTIMATOR_FIELDS}
        params.update(random_state=self.seed, n_jobs=-1 if self.parallel else 1)
        params.update(changes)
        return RPWNORegressor(**params)


# ---------------------------------------------------------------- helpers

def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _file_sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(value, flag: str):
    if not value:
        raise ValueError(f"{flag} is required for this command")
    return value


def _xy(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return ds.inputs, ds.outputs


def _training_set(cfg: RunConfig) -> Dataset:
    ds = Dataset.load(_require(cfg.dataset, "--dataset"))
    if cfg.train_count is not None:
        if cfg.train_count > len(ds):
            raise ValueError(f"train_count {cfg.train_count} exceeds dataset size {len(ds)}")
        ds = ds.subset(slice(0, cfg.train_count))
    return ds


def parse_points(spec: str, spatial_dims: int) -> list[dict[str, float]]:
    """``"x=0.14;x=0.92"`` or ``"x=0.1,y=0.2;x=0.5,y=0.5"`` -> list of coordinate dicts."""
    axes = AXIS_NAMES[spatial_dims]
    points = []
    for chunk in filter(None, (c.strip() for c in spec.split(";"))):
        coords = {}
        for part in chunk.split(","):
            key, sep, val = part.partition("=")
            key = key.strip()
            if not sep or key not in axes or key in coords:
                raise ValueError(f"bad probe point {chunk!r}; expected {'/'.join(axes)}=value pairs")
            coords[key] = float(val)
            if not 0.0 <= coords[key] <= 1.0:
                raise ValueError(f"probe coordinate {key}={coords[key]} outside [0, 1]")
        if set(coords) != set(axes):
            raise ValueError(f"probe point {chunk!r} needs coordinates {axes}")
        points.append(coords)
    return points


def nearest_index(grids: list[np.ndarray], coords: dict[str, float]) -> tuple[int, ...]:
    axes = AXIS_NAMES[len(grids)]
    return tuple(int(np.argmin(np.abs(g - coords[a]))) for g, a in zip(grids, axes))


def metrics_row(report) -> dict:
    return {k: getattr(report, k) for k in METRIC_KEYS}


# ---------------------------------------------------------------- library entry points

def sweep_tds(train: Dataset, test: Dataset, tds: list[int], cfg: RunConfig) -> list[dict]:
    """One ensemble per TDS value on the nested subsets ``train[:k]``."""
    if max(tds) > len(train):
        raise ValueError(f"max tds {max(tds)} exceeds training set size {len(train)}")
    rows = []
    for k in tds:
        sub = train.subset(slice(0, k))
        est = cfg.estimator(spatial_dims=len(sub.grids)).fit(*_xy(sub))
        rep = evaluate(est.predict_stats(test.inputs), test.outputs)
        rows.append({"tds": int(k), **metrics_row(rep)})
        log.info("tds=%d %s", k, rows[-1])
    return rows


def sweep_beta(train: Dataset, test: Dataset, betas: list[float], cfg: RunConfig) -> list[dict]:
    """One ensemble per beta; seeds, data and schedule are shared across the sweep."""
    rows = []
    for b in betas:
        est = cfg.estimator(beta=float(b), spatial_dims=len(train.grids)).fit(*_xy(train))
        rep = evaluate(est.predict_stats(test.inputs), test.outputs)
        rows.append({"beta": float(b), **metrics_row(rep)})
        log.info("beta=%g %s", b, rows[-1])
    return rows


# ---------------------------------------------------------------- commands

def cmd_generate(cfg: RunConfig) -> Path:
    grid = cfg.grid or DEFAULT_GRID[cfg.problem]
    ds = build_dataset(cfg.problem, cfg.count, grid, cfg.seed, viscosity=cfg.viscosity, dt=cfg.dt)
    path = _outdir(cfg) / (cfg.name or f"{cfg.problem}_n{cfg.count}_g{grid}_s{cfg.seed}.rpwd")
    ds.save(path)
    summary = {"path": str(path), "problem": cfg.problem, "count": len(ds),
               "inputs": list(ds.inputs.shape), "outputs": list(ds.outputs.shape),
               "seed": cfg.seed, "sha256": _file_sha(path)}
    print(json.dumps(summary, sort_keys=True))
    return path


def cmd_train(cfg: RunConfig) -> Path:
    ds = _training_set(cfg)
    out = _outdir(cfg)
    est = cfg.estimator(spatial_dims=len(ds.grids)).fit(*_xy(ds))
    ckpt = out / "checkpoint.rpwc"
    save_checkpoint(est, ckpt)
    seeds = est.member_seeds()
    rows = [(i, seeds[i], e + 1, _fmt(v)) for i, hist in enumerate(est.loss_history_) for e, v in enumerate(hist)]
    _write_csv(out / "loss.csv", LOSS_HEADER, rows)
    _write_json(out / "run.json", {"command": "train", "config": cfg.to_dict(), "member_seeds": seeds,
                                   "train_samples": len(ds), "dataset_sha256": ds.checksum()})
    print(json.dumps({"checkpoint": str(ckpt), "members": len(seeds),
                      "final_loss": [h[-1] for h in est.loss_history_]}))
    return ckpt


def cmd_eval(cfg: RunConfig) -> Path:
    est = load_checkpoint(_require(cfg.checkpoint, "--checkpoint"))
    test = Dataset.load(_require(cfg.test_dataset or cfg.dataset, "--test-dataset"))
    if test.grid_shape != est.config_.grid:
        raise ValueError(f"incompatible grid extents: checkpoint {est.config_.grid}, dataset {test.grid_shape}")
    out = _outdir(cfg)
    stats = est.predict_stats(test.inputs)
    report = evaluate(stats, test.outputs)
    truth = test.outputs

    axes = AXIS_NAMES[len(test.grids)]
    mesh = np.meshgrid(*test.grids, indexing="ij")
    rows = []
    for s in range(len(test)):
        for pos in np.ndindex(*test.grid_shape):
            idx = (s, *pos, 0)
            rows.append([s, *(_fmt(m[pos]) for m in mesh), _fmt(truth[idx]), _fmt(stats.mean[idx]),
                         _fmt(stats.std[idx]), _fmt(stats.lower95[idx]), _fmt(stats.upper95[idx])])
    _write_csv(out / "fields.csv", ["sample", *axes, "truth", "mean", "std", "lower95", "upper95"], rows)
    _write_csv(out / "per_sample.csv", ["sample"] + METRIC_KEYS,
               [[r["sample"], *(_fmt(r[k]) for k in METRIC_KEYS)] for r in report.per_sample])

    pdfs = []
    for k, coords in enumerate(parse_points(cfg.points, len(test.grids))):
        pos = nearest_index(test.grids, coords)
        pred_v = stats.mean[(slice(None), *pos, 0)]
        true_v = truth[(slice(None), *pos, 0)]
        xs = pdf_abscissae(pred_v, true_v, n=cfg.pdf_points)
        p_pdf, t_pdf = empirical_pdf(pred_v, xs, tuple(coords.values())), empirical_pdf(true_v, xs)
        _write_csv(out / f"pdf_{k}.csv", PDF_HEADER,
                   [(_fmt(a), _fmt(p), _fmt(t)) for a, p, t in zip(xs, p_pdf.density, t_pdf.density)])
        pdfs.append({"file": f"pdf_{k}.csv", "requested": coords,
                     "grid_point": {a: float(g[i]) for a, g, i in zip(axes, test.grids, pos)},
                     "predicted_bandwidth": p_pdf.bandwidth, "truth_bandwidth": t_pdf.bandwidth,
                     "predicted_degenerate": p_pdf.degenerate, "truth_degenerate": t_pdf.degenerate})

    doc = json.loads(report.to_json())
    doc.update(pdfs=pdfs, test_samples=len(test), test_dataset_sha256=test.checksum(),
               checkpoint_sha256=_file_sha(cfg.checkpoint), config=cfg.to_dict())
    path = out / "report.json"
    _write_json(path, doc)
    print(report.to_json(per_sample=False))
    return path


def _sweep_inputs(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    return Dataset.load(_require(cfg.dataset, "--dataset")), Dataset.load(_require(cfg.test_dataset, "--test-dataset"))


def cmd_sweep_tds(cfg: RunConfig) -> Path:
    train, test = _sweep_inputs(cfg)
    rows = sweep_tds(train, test, cfg.tds, cfg)
    out = _outdir(cfg)
    path = out / "tds_trend.csv"
    _write_csv(path, TDS_HEADER, [[r["tds"], *(_fmt(r[k]) for k in METRIC_KEYS)] for r in rows])
    _write_json(out / "run.json", {"command": "sweep-tds", "config": cfg.to_dict(),
                                   "train_sha256": train.checksum(), "test_sha256": test.checksum()})
    print(path.read_text(), end="")
    return path


def cmd_sweep_beta(cfg: RunConfig) -> Path:
    train, test = _sweep_inputs(cfg)
    if cfg.train_count is not None:
        train = train.subset(slice(0, cfg.train_count))
    rows = sweep_beta(train, test, cfg.betas, cfg)
    out = _outdir(cfg)
    path = out / "beta_sweep.csv"
    _write_csv(path, BETA_HEADER, [[_fmt(r[k]) for k in BETA_HEADER] for r in rows])
    _write_json(out / "run.json", {"command": "sweep-beta", "config": cfg.to_dict(),
                                   "train_sha256": train.checksum(), "test_sha256": test.checksum()})
    print(path.read_text(), end="")
    return path


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "sweep-tds": cmd_sweep_tds, "sweep-beta": cmd_sweep_beta}


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, help="dataset seed (generate) or ensemble seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--problem", choices=PROBLEMS)
    common.add_argument("--grid", type=int)
    common.add_argument("--verbose", "-v", action="count", default=0)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--dataset", help="training dataset (RPWD)")
    model.add_argument("--test-dataset", dest="test_dataset", help="held-out dataset (RPWD)")
    model.add_argument("--train-count", dest="train_count", type=int, help="use the first N training samples")
    model.add_argument("--members", dest="n_members", type=int)
    model.add_argument("--beta", type=float)
    model.add_argument("--width", type=int)
    model.add_argument("--blocks", dest="n_blocks", type=int)
    model.add_argument("--wavelet-order", dest="wavelet_order", type=int)
    model.add_argument("--levels", type=int)
    model.add_argument("--proj-hidden", dest="proj_hidden", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--batch-size", dest="batch_size", type=int)
    model.add_argument("--lr", dest="learning_rate", type=float)
    par = model.add_mutually_exclusive_group()
    par.add_argument("--parallel", dest="parallel", action="store_true", default=None,
                     help="train members on worker threads (capped by RPWNO_THREADS)")
    par.add_argument("--serial", dest="parallel", action="store_false")

    p = argparse.ArgumentParser(prog="rpwno", description="Randomized-prior wavelet neural operator experiments")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", parents=[common], help="sample inputs and solve the PDE")
    g.add_argument("--count", type=int)
    g.add_argument("--name", help="output file name")
    g.add_argument("--viscosity", type=float)
    g.add_argument("--dt", type=float)
    sub.add_parser("train", parents=[common, model], help="train an ensemble and write a checkpoint")
    e = sub.add_parser("eval", parents=[common, model], help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint")
    e.add_argument("--points", help='PDF probe points, e.g. "x=0.14;x=0.92"')
    t = sub.add_parser("sweep-tds", parents=[common, model], help="one ensemble per training-set size")
    t.add_argument("--tds", type=_int_list, help="comma-separated sizes, e.g. 100,400")
    b = sub.add_parser("sweep-beta", parents=[common, model], help="one ensemble per prior scale")
    b.add_argument("--betas", type=_float_list, help="comma-separated values, e.g. 0.5,1,2,100")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
        COMMANDS[args.command](cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"rpwno {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
