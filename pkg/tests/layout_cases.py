"""Synthetic point-layout generator for line-reconstruction tests."""

import random

from signpipe.layout import LayoutPoint


def make_line_layout(
    seed: int,
    n_lines_range=(3, 10),
    points_per_line=(8, 14),
    max_slope=0.2,
    residual_threshold=8.0,
    gap_factor=3.0,
    x_spacing=40.0,
    jitter=1.5,
):
    """Random multi-line point cloud honoring the layout contract: slopes
    within max_slope, vertical line gaps at least gap_factor x the residual
    threshold. Returns (points, truth: point_id -> line index top-first)."""
    rng = random.Random(seed)
    n_lines = rng.randint(*n_lines_range)
    gap = gap_factor * residual_threshold
    points = []
    truth = {}
    y = rng.uniform(0, 30)
    for line_idx in range(n_lines):
        n_points = rng.randint(*points_per_line)
        slope = rng.uniform(-max_slope, max_slope)
        x0 = rng.uniform(0, 25)
        for j in range(n_points):
            x = x0 + j * x_spacing + rng.uniform(-4, 4)
            py = y + slope * (x - x0) + rng.uniform(-jitter, jitter)
            pid = f"L{line_idx}P{j}"
            points.append(LayoutPoint(pid, x, py))
            truth[pid] = line_idx
        # next line: keep the whole slanted band clear of this one
        span = n_points * x_spacing * max_slope
        y += gap + span + 2 * jitter + rng.uniform(0, 20)
    return points, truth
