"""Evaluation metrics and pointwise density estimates for ensemble predictions.

The percentage NMSE is defined here as ``100 * sum((pred - truth)^2) /
sum(truth^2)`` over the whole test tensor. The per-sample variant is kept
in the breakdown table of :func:`evaluate`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .ensemble import PredictionStats


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"extent mismatch: {a.shape} vs {b.shape}")
    return a, b


def mae(pred_mean, truth) -> float:
    p, t = _pair(pred_mean, truth)
    return float(np.mean(np.abs(p - t)))


def mean_std(stats: PredictionStats) -> float:
    return float(np.mean(stats.std))


def nmse_percent(pred_mean, truth) -> float:
    p, t = _pair(pred_mean, truth)
    denom = np.sum(t * t)
    if denom == 0:
        raise ValueError("nmse_percent: truth has zero norm")
    return float(100.0 * np.sum((p - t) ** 2) / denom)


def relative_l2_percent(pred_mean, truth) -> float:
    p, t = _pair(pred_mean, truth)
    s = len(t)
    num = np.linalg.norm((p - t).reshape(s, -1), axis=1)
    den = np.linalg.norm(t.reshape(s, -1), axis=1)
    if np.any(den == 0):
        raise ValueError(f"relative_l2_percent: truth sample {int(np.flatnonzero(den == 0)[0])} has zero norm")
    return float(100.0 * np.mean(num / den))


def ci_coverage(stats: PredictionStats, truth) -> float:
    lo, t = _pair(stats.lower95, truth)
    hi = stats.upper95
    return float(np.mean((lo <= t) & (t <= hi)))


@dataclass
class PointPdf:
    location: tuple[float, ...]
    abscissae: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False


def empirical_pdf(values, abscissae, location: tuple[float, ...] = ()) -> PointPdf:
    """Gaussian KDE with Silverman's bandwidth, evaluated on ``abscissae``.

    A constant sample has no density; it is returned as a spike on the
    abscissa closest to the constant, with unit trapezoidal mass, flagged
    ``degenerate``.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    xs = np.asarray(abscissae, dtype=np.float64)
    if v.size < 30:
        raise ValueError(f"empirical_pdf needs at least 30 values, got {v.size}")
    if np.ptp(v) == 0:
        dens = np.zeros_like(xs)
        j = int(np.argmin(np.abs(xs - v[0])))
        if xs.size > 1:
            # height chosen so the trapezoidal integral is exactly one
            width = (xs[min(j + 1, xs.size - 1)] - xs[max(j - 1, 0)]) / 2
            dens[j] = 1.0 / width
        else:
            dens[j] = 1.0
        return PointPdf(tuple(location), xs, dens, 0.0, degenerate=True)
    kde = gaussian_kde(v, bw_method="silverman")
    bw = float(np.sqrt(kde.covariance[0, 0]))
    return PointPdf(tuple(location), xs, kde(xs), bw)


def pdf_abscissae(*samples, n: int = 200, reach: float = 4.0) -> np.ndarray:
    """Shared evaluation points that resolve the KDE of every sample.

    Each sample contributes ``n`` evenly spaced points covering its range
    widened by ``reach`` Silverman bandwidths; the union is returned sorted.
    A narrow sample therefore keeps its resolution next to a wide one.
    """
    pieces = []
    for s in samples:
        v = np.asarray(s, dtype=np.float64).ravel()
        lo, hi = float(v.min()), float(v.max())
        if hi > lo:
            bw = float(np.sqrt(gaussian_kde(v, bw_method="silverman").covariance[0, 0]))
        else:
            bw = max(abs(lo), 1.0) * 1e-3
        pieces.append(np.linspace(lo - reach * bw, hi + reach * bw, n))
    return np.unique(np.concatenate(pieces))


@dataclass
class EvalReport:
    mae: float
    mean_std: float
    rel_l2_percent: float
    nmse_percent: float
    coverage95: float
    per_sample: list[dict] = field(default_factory=list)

    def to_json(self, per_sample: bool = True) -> str:
        d = asdict(self)
        if not per_sample:
            d.pop("per_sample")
        return json.dumps(d, indent=2, sort_keys=True)


def evaluate(stats: PredictionStats, truth) -> EvalReport:
    """Full metric suite plus a per-sample breakdown."""
    mean, t = _pair(stats.mean, truth)
    rows = []
    for i in range(len(t)):
        si = PredictionStats(stats.mean[i], stats.std[i])
        rows.append({
            "sample": i,
            "mae": mae(mean[i], t[i]),
            "mean_std": mean_std(si),
            "rel_l2_percent": relative_l2_percent(mean[i:i + 1], t[i:i + 1]),
            "nmse_percent": nmse_percent(mean[i], t[i]),
            "coverage95": ci_coverage(si, t[i]),
        })
    return EvalReport(mae(mean, t), mean_std(stats), relative_l2_percent(mean, t),
                      nmse_percent(mean, t), ci_coverage(stats, t), rows)
