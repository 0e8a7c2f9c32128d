"""Reliability maps, temperature scaling, and quantile-restricted fits.

A reliability map bins scored predictions into equal-width bins over the
log-likelihood range, then summarizes calibration with a least-squares
line fit of per-bin mean quality on per-bin mean log-likelihood.  Quality
scores are opaque external inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence


@dataclass(frozen=True, slots=True)
class ScoredPrediction:
    sample_id: str
    loglik: float
    quality: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.loglik) and math.isfinite(self.quality)):
            raise ValueError(
                f"sample {self.sample_id!r}: loglik and quality must be finite"
            )


@dataclass(frozen=True)
class ReliabilityMap:
    """Equal-width binning plus the linear calibration fit over bin means.

    Bin means are None for empty bins.  ``degenerate_fit`` flags maps where
    the slope is undefined (zero-width loglik range, or fewer than two
    populated bins).
    """

    bin_edges: tuple[float, ...]
    bin_mean_loglik: tuple[float | None, ...]
    bin_mean_quality: tuple[float | None, ...]
    bin_count: tuple[int, ...]
    fit_slope: float | None
    fit_intercept: float | None
    fit_mse: float | None
    cumulative_fraction: tuple[float, ...]
    degenerate_fit: bool

    def to_json_dict(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "bin_mean_loglik": list(self.bin_mean_loglik),
            "bin_mean_quality": list(self.bin_mean_quality),
            "bin_count": list(self.bin_count),
            "fit_slope": self.fit_slope,
            "fit_intercept": self.fit_intercept,
            "fit_mse": self.fit_mse,
            "cumulative_fraction": list(self.cumulative_fraction),
            "degenerate_fit": self.degenerate_fit,
        }


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    mse: float


def _least_squares(xs: Sequence[float], ys: Sequence[float]) -> LinearFit | None:
    """Ordinary least squares of y on x; None when x has zero variance."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    if sxx == 0.0:
        return None
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    mse = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys)) / n
    return LinearFit(slope=slope, intercept=intercept, mse=mse)


def _bin_index(loglik: float, lo: float, width: float, n_bins: int) -> int:
    # Half-open-from-above convention: a value on an interior edge falls in
    # the lower bin; the global max lands in the last bin.
    idx = math.ceil((loglik - lo) / width) - 1
    return min(max(idx, 0), n_bins - 1)


def reliability_map(data: Sequence[ScoredPrediction], n_bins: int = 10) -> ReliabilityMap:
    """Bin predictions by loglik and fit quality-vs-loglik over bin means."""
    if len(data) < 2:
        raise ValueError(f"need at least 2 predictions, got {len(data)}")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    logliks = [d.loglik for d in data]
    lo, hi = min(logliks), max(logliks)
    n = len(data)

    if lo == hi:
        # Zero-width range: one bin holds everything, no slope is defined.
        return ReliabilityMap(
            bin_edges=(lo, hi),
            bin_mean_loglik=(lo,),
            bin_mean_quality=(sum(d.quality for d in data) / n,),
            bin_count=(n,),
            fit_slope=None,
            fit_intercept=None,
            fit_mse=None,
            cumulative_fraction=(1.0,),
            degenerate_fit=True,
        )

    width = (hi - lo) / n_bins
    edges = tuple(lo + width * i for i in range(n_bins)) + (hi,)
    sums_ll = [0.0] * n_bins
    sums_q = [0.0] * n_bins
    counts = [0] * n_bins
    for d in data:
        idx = _bin_index(d.loglik, lo, width, n_bins)
        sums_ll[idx] += d.loglik
        sums_q[idx] += d.quality
        counts[idx] += 1

    mean_ll: list[float | None] = []
    mean_q: list[float | None] = []
    for i in range(n_bins):
        if counts[i]:
            mean_ll.append(sums_ll[i] / counts[i])
            mean_q.append(sums_q[i] / counts[i])
        else:
            mean_ll.append(None)
            mean_q.append(None)

    xs = [m for m in mean_ll if m is not None]
    ys = [m for m in mean_q if m is not None]
    fit = _least_squares(xs, ys) if len(xs) >= 2 else None

    cumulative = []
    running = 0
    for c in counts:
        running += c
        cumulative.append(running / n)

    return ReliabilityMap(
        bin_edges=edges,
        bin_mean_loglik=tuple(mean_ll),
        bin_mean_quality=tuple(mean_q),
        bin_count=tuple(counts),
        fit_slope=fit.slope if fit else None,
        fit_intercept=fit.intercept if fit else None,
        fit_mse=fit.mse if fit else None,
        cumulative_fraction=tuple(cumulative),
        degenerate_fit=fit is None,
    )


def temperature_scale(data: Sequence[ScoredPrediction], t: float) -> list[ScoredPrediction]:
    """Divide every loglik by ``t``; quality scores are untouched."""
    if not (math.isfinite(t) and t > 0):
        raise ValueError(f"temperature must be a positive real, got {t!r}")
    return [
        ScoredPrediction(sample_id=d.sample_id, loglik=d.loglik / t, quality=d.quality)
        for d in data
    ]


def quantile_fit(
    data: Sequence[ScoredPrediction], q: float, n_bins: int = 10
) -> LinearFit:
    """Refit after dropping the top (1 - q) fraction of predictions by loglik."""
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q}")
    n = len(data)
    n_drop = math.floor((1.0 - q) * n)
    if n - n_drop < 2:
        raise ValueError(
            f"q={q} leaves {n - n_drop} of {n} predictions; need at least 2"
        )
    if n_drop == 0:
        kept = list(data)
    else:
        order = sorted(range(n), key=lambda i: (data[i].loglik, i))
        dropped = set(order[n - n_drop:])
        kept = [d for i, d in enumerate(data) if i not in dropped]
    rmap = reliability_map(kept, n_bins=n_bins)
    if rmap.degenerate_fit:
        raise ValueError("surviving predictions have no usable loglik spread for a fit")
    return LinearFit(slope=rmap.fit_slope, intercept=rmap.fit_intercept, mse=rmap.fit_mse)
