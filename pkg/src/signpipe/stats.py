"""Rank-frequency statistics of sign labels: single and broken power-law
fits on log-log data, and top-n coverage."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


@dataclass
class RankFrequency:
    """(class_id, count) entries sorted by count descending, ties broken by
    class_id ascending; rank r is position r (1-based) in entries."""

    entries: list[tuple[int, int]]

    def counts(self) -> np.ndarray:
        return np.array([c for _, c in self.entries], dtype=float)

    def positive(self) -> np.ndarray:
        counts = self.counts()
        return counts[counts > 0]


@dataclass
class PowerLawFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class BrokenPowerLawFit:
    break_rank: int
    left: PowerLawFit
    right: PowerLawFit
    r2_total: float
    continuous: bool = True


def rank_frequency(dataset: Dataset) -> RankFrequency:
    if not dataset.images and not dataset.catalog:
        raise ValueError("empty dataset")
    counts: Counter[int] = Counter()
    for img in dataset.images:
        for ann in img.annotations:
            counts[ann.class_id] += 1
    entries = [(c.class_id, counts.get(c.class_id, 0)) for c in dataset.catalog]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return RankFrequency(entries)


def _r2(y: np.ndarray, fitted: np.ndarray) -> float:
    sse = float(np.sum((y - fitted) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        # Flat data: zero residuals mean a perfect fit; otherwise r2 has no
        # least-squares meaning.
        if sse <= 1e-24:
            return 1.0
        raise ValueError("r2 undefined: zero total variance with nonzero residuals")
    return 1.0 - sse / sst


def _loglog_points(rf: RankFrequency) -> tuple[np.ndarray, np.ndarray]:
    counts = rf.counts()
    ranks = np.arange(1, len(counts) + 1, dtype=float)
    mask = counts > 0
    return np.log(ranks[mask]), np.log(counts[mask])


def fit_power_law(rf: RankFrequency) -> PowerLawFit:
    """Ordinary least squares of ln(count) on ln(rank). Zero-count entries
    are excluded from the fit."""
    x, y = _loglog_points(rf)
    if len(x) < 2:
        raise ValueError("need at least 2 positive-count entries to fit")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    return PowerLawFit(float(slope), float(intercept), _r2(y, fitted))


def _hinge_fit(x: np.ndarray, y: np.ndarray, xb: float) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares two-segment line continuous at xb.

    Model: y = b + a1*min(x-xb, 0) + a2*max(x-xb, 0). Returns (params, fitted)
    with params = [b, a1, a2].
    """
    design = np.column_stack(
        [np.ones_like(x), np.minimum(x - xb, 0.0), np.maximum(x - xb, 0.0)]
    )
    params, *_ = np.linalg.lstsq(design, y, rcond=None)
    return params, design @ params


def fit_broken_power_law(rf: RankFrequency, continuous: bool = True) -> BrokenPowerLawFit:
    """Two-segment power law: scan all candidate break ranks, fit each by
    least squares in log-log space, and keep the break minimizing total SSE.

    The default model is continuous at the break (3 free parameters); the
    discontinuous variant (independent OLS per side, 4 parameters) is exposed
    via continuous=False.
    """
    x, y = _loglog_points(rf)
    m = len(x)
    if m < 4:
        raise ValueError("need at least 4 positive-count entries to fit a broken law")

    best = None
    for br in range(2, m):  # break at rank br, 2 <= br <= m-1
        xb = x[br - 1]
        if continuous:
            (b, a1, a2), fitted = _hinge_fit(x, y, xb)
            left_slope, left_icpt = float(a1), float(b - a1 * xb)
            right_slope, right_icpt = float(a2), float(b - a2 * xb)
        else:
            ls, li = np.polyfit(x[:br], y[:br], 1)
            rs, ri = np.polyfit(x[br - 1 :], y[br - 1 :], 1)
            fitted = np.where(x <= xb, ls * x + li, rs * x + ri)
            left_slope, left_icpt = float(ls), float(li)
            right_slope, right_icpt = float(rs), float(ri)
        sse = float(np.sum((y - fitted) ** 2))
        if best is None or sse < best[0]:
            best = (sse, br, left_slope, left_icpt, right_slope, right_icpt, fitted)

    _, br, ls, li, rs, ri, fitted = best
    # The break rank belongs to both segments when reporting per-segment r2;
    # each segment is scored with its own line (identical at the break for
    # the continuous model).
    left = PowerLawFit(ls, li, _r2(y[:br], ls * x[:br] + li))
    right = PowerLawFit(rs, ri, _r2(y[br - 1 :], rs * x[br - 1 :] + ri))
    return BrokenPowerLawFit(
        break_rank=br, left=left, right=right, r2_total=_r2(y, fitted), continuous=continuous
    )


def coverage_topn(rf: RankFrequency, n: int) -> float:
    """Fraction of all annotations covered by the n most frequent classes."""
    if not (1 <= n <= len(rf.entries)):
        raise ValueError(f"n must be in [1, {len(rf.entries)}]")
    counts = rf.counts()
    total = counts.sum()
    if total == 0:
        raise ValueError("no annotations to cover")
    return float(counts[:n].sum() / total)
