"""Text-line reconstruction: sequential RANSAC assignment of hotspot
centroids to near-horizontal lines, ridge-regularized refitting, outlier
reassignment, and left-to-right / top-to-bottom reading order."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LayoutPoint:
    point_id: str
    x: float
    y: float


@dataclass
class LineConfig:
    residual_threshold: float
    ridge_lambda: float = 10.0
    max_abs_slope: float = 0.3
    ransac_iterations: int = 200
    min_line_points: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.residual_threshold <= 0:
            raise ValueError("residual_threshold must be > 0")
        if self.max_abs_slope <= 0:
            raise ValueError("max_abs_slope must be > 0")
        if self.ransac_iterations < 1:
            raise ValueError("ransac_iterations must be >= 1")
        if self.min_line_points < 2:
            raise ValueError("min_line_points must be >= 2")


@dataclass
class TextLine:
    slope: float
    intercept: float  # y at x = 0
    members: list[str] = field(default_factory=list)  # point ids, ascending x


@dataclass
class LayoutResult:
    lines: list[TextLine]
    assignment: dict[str, int]
    reading_sequence: list[str]


def default_residual_threshold(box_heights) -> float:
    """Inlier band tied to sign size: 0.75 x median hotspot height."""
    heights = [h for h in box_heights if h > 0]
    if not heights:
        raise ValueError("need at least one positive box height")
    return 0.75 * float(np.median(heights))


def fit_ridge_line(points, lam: float) -> tuple[float, float]:
    """Slope-penalized least squares: minimizes sum (y - a*x - b)^2 + lam*a^2
    with the intercept unpenalized.

    Closed form on centered data: a = Sxy / (Sxx + lam), b = mean(y) - a*mean(x).
    """
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least 2 points")
    x_mean, y_mean = xs.mean(), ys.mean()
    sxx = float(np.sum((xs - x_mean) ** 2))
    if sxx == 0.0:
        raise ValueError("degenerate input: all x equal")
    sxy = float(np.sum((xs - x_mean) * (ys - y_mean)))
    a = sxy / (sxx + lam)
    b = y_mean - a * x_mean
    return a, b


def _ridge_refit_normalized(points, lam: float) -> tuple[float, float]:
    """Ridge fit with x standardized to zero mean / unit variance so the
    slope penalty is scale-free, mapped back to pixel coordinates."""
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    x_mean = xs.mean()
    x_std = xs.std()
    if x_std == 0.0:
        # Vertical stack: flat line through the mean height.
        return 0.0, float(ys.mean())
    u = (xs - x_mean) / x_std
    a_u, b_u = fit_ridge_line(list(zip(u, ys)), lam)
    slope = a_u / x_std
    intercept = b_u - a_u * x_mean / x_std
    return slope, intercept


def _point_line_distance(point: LayoutPoint, line: TextLine) -> float:
    return abs(line.slope * point.x - point.y + line.intercept) / math.sqrt(
        line.slope**2 + 1.0
    )


def _residuals(points: list[LayoutPoint], slope: float, intercept: float) -> np.ndarray:
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    return np.abs(ys - (slope * xs + intercept))


def sequential_ransac(points: list[LayoutPoint], config: LineConfig) -> LayoutResult:
    """Iteratively peel off text lines from a point cloud.

    Each round samples point pairs, rejects candidate lines steeper than
    max_abs_slope, and keeps the candidate with the most points inside the
    residual band (ties: smaller total residual). The winner's inliers are
    refit with the slope-penalized regression (slope clamped back into range
    if the refit exceeds it) and removed; rounds repeat until one or fewer
    points remain. Leftover outliers join their nearest line, lines are
    sorted by intercept, and the reading order is emitted.
    """
    if not points:
        raise ValueError("need at least 1 point")
    rng = random.Random(config.seed)
    remaining = list(points)
    raw_lines: list[tuple[float, float, list[LayoutPoint]]] = []

    while len(remaining) > 1:
        best = _ransac_round(remaining, config, rng)
        if best is None:
            if raw_lines:
                break  # leftovers become outliers of existing lines
            # No line can be sampled (e.g. all x equal): anchor a flat line
            # at the topmost point so the sweep always makes progress.
            anchor = min(remaining, key=lambda p: (p.y, p.x, p.point_id))
            slope, intercept = 0.0, anchor.y
            inlier_mask = _residuals(remaining, slope, intercept) <= config.residual_threshold
            inliers = [p for p, keep in zip(remaining, inlier_mask) if keep]
        else:
            slope, intercept, inliers = best
            if len(inliers) >= 2:
                slope, intercept = _ridge_refit_normalized(
                    [(p.x, p.y) for p in inliers], config.ridge_lambda
                )
            if abs(slope) > config.max_abs_slope:
                slope = math.copysign(config.max_abs_slope, slope)
                xs = np.array([p.x for p in inliers])
                ys = np.array([p.y for p in inliers])
                intercept = float(ys.mean() - slope * xs.mean())
        raw_lines.append((slope, intercept, inliers))
        inlier_ids = {p.point_id for p in inliers}
        remaining = [p for p in remaining if p.point_id not in inlier_ids]

    outliers = remaining
    if not raw_lines:
        # Single-point input: one degenerate flat line through it.
        p = outliers[0]
        raw_lines.append((0.0, p.y, [p]))
        outliers = []

    lines = [TextLine(slope=s, intercept=b) for s, b, _ in raw_lines]
    members: list[list[LayoutPoint]] = [list(pts) for _, _, pts in raw_lines]
    order = sorted(range(len(lines)), key=lambda i: (lines[i].intercept, lines[i].slope))
    lines = [lines[i] for i in order]
    members = [members[i] for i in order]

    if outliers:
        assigned, lines = assign_outliers(outliers, lines)
        for p, li in zip(outliers, assigned):
            members[li].append(p)

    pos = {p.point_id: i for i, p in enumerate(points)}
    assignment: dict[str, int] = {}
    for li, (line, pts) in enumerate(zip(lines, members)):
        pts.sort(key=lambda p: (p.x, pos[p.point_id]))
        line.members = [p.point_id for p in pts]
        for p in pts:
            assignment[p.point_id] = li

    reading = [pid for line in lines for pid in line.members]
    return LayoutResult(lines=lines, assignment=assignment, reading_sequence=reading)


def _ransac_round(
    points: list[LayoutPoint], config: LineConfig, rng: random.Random
) -> tuple[float, float, list[LayoutPoint]] | None:
    """Best two-point candidate line by (inlier count, -total residual);
    None when no sampled pair yields an admissible line with enough inliers."""
    n = len(points)
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    best: tuple[int, float, float, float, np.ndarray] | None = None
    for _ in range(config.ransac_iterations):
        i, j = rng.sample(range(n), 2)
        dx = xs[j] - xs[i]
        if dx == 0.0:
            continue
        slope = (ys[j] - ys[i]) / dx
        if abs(slope) > config.max_abs_slope:
            continue
        intercept = ys[i] - slope * xs[i]
        residuals = np.abs(ys - (slope * xs + intercept))
        mask = residuals <= config.residual_threshold
        count = int(mask.sum())
        if count < max(2, config.min_line_points):
            continue
        total_residual = float(residuals[mask].sum())
        if best is None or count > best[0] or (count == best[0] and total_residual < best[1]):
            best = (count, total_residual, slope, intercept, mask)
    if best is None:
        return None
    _, _, slope, intercept, mask = best
    inliers = [p for p, keep in zip(points, mask) if keep]
    return float(slope), float(intercept), inliers


def assign_outliers(
    outliers: list[LayoutPoint],
    lines: list[TextLine],
    mode: str = "perpendicular",
    points_by_id: dict[str, LayoutPoint] | None = None,
) -> tuple[list[int], list[TextLine]]:
    """Assign each outlier to its nearest text line.

    Distance is perpendicular point-to-line by default; mode="nearest_member"
    instead uses the closest member point (requires points_by_id). Ties go to
    the lower line index. With no lines at all, the outliers form one new
    degenerate flat line and every assignment is 0. Returns (line index per
    outlier, line list, extended only in the no-lines case).
    """
    if not lines:
        ys = [p.y for p in outliers]
        new_line = TextLine(
            slope=0.0,
            intercept=float(np.mean(ys)),
            members=[p.point_id for p in sorted(outliers, key=lambda p: (p.x, p.point_id))],
        )
        return [0] * len(outliers), [new_line]

    assignments = []
    for p in outliers:
        if mode == "perpendicular":
            dists = [_point_line_distance(p, line) for line in lines]
        elif mode == "nearest_member":
            if points_by_id is None:
                raise ValueError("nearest_member mode requires points_by_id")
            dists = []
            for line in lines:
                coords = [points_by_id[m] for m in line.members]
                dists.append(
                    min(math.hypot(p.x - q.x, p.y - q.y) for q in coords)
                    if coords
                    else math.inf
                )
        else:
            raise ValueError(f"unknown distance mode {mode!r}")
        assignments.append(int(np.argmin(dists)))  # argmin takes the first minimum
    return assignments, lines


def order_reading(lines: list[TextLine]) -> list[str]:
    """Flatten member ids over lines sorted by ascending intercept (top of
    the image first); members are already ascending in x within a line."""
    ordered = sorted(lines, key=lambda ln: (ln.intercept, ln.slope))
    return [pid for line in ordered for pid in line.members]


LINE_PALETTE = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324",
]


def render_layout_svg(
    points: list[LayoutPoint],
    result: LayoutResult,
    width: float,
    height: float,
    image_href: str | None = None,
) -> str:
    """SVG overlay: each detected line drawn in a stable color with its
    member centroids and their position in the reading order."""
    by_id = {p.point_id: p for p in points}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">'
    ]
    if image_href:
        parts.append(
            f'<image href="{image_href}" x="0" y="0" width="{width:g}" height="{height:g}"/>'
        )
    order_of = {pid: i + 1 for i, pid in enumerate(result.reading_sequence)}
    for li, line in enumerate(result.lines):
        color = LINE_PALETTE[li % len(LINE_PALETTE)]
        y0 = line.intercept
        y1 = line.slope * width + line.intercept
        parts.append(
            f'<line x1="0" y1="{y0:.2f}" x2="{width:g}" y2="{y1:.2f}" '
            f'stroke="{color}" stroke-width="1.5" stroke-dasharray="6 3"/>'
        )
        for pid in line.members:
            p = by_id[pid]
            parts.append(
                f'<circle cx="{p.x:.2f}" cy="{p.y:.2f}" r="4" fill="{color}"/>'
                f'<text x="{p.x + 6:.2f}" y="{p.y - 6:.2f}" font-size="11" '
                f'fill="{color}">{order_of[pid]}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts)
