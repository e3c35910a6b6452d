import math

import numpy as np
import pytest

from signpipe.dataset import Annotation, BoundingBox, Dataset, ImageRecord, SignClass
from signpipe.stats import (
    RankFrequency,
    coverage_topn,
    fit_broken_power_law,
    fit_power_law,
    rank_frequency,
)


def dataset_with_counts(counts: dict[int, int]) -> Dataset:
    catalog = [SignClass(c, f"S{c}") for c in sorted(counts)]
    anns = []
    i = 0
    for class_id, n in counts.items():
        for _ in range(n):
            anns.append(Annotation(f"a{i}", BoundingBox(0, 0, 5, 5), class_id))
            i += 1
    img = ImageRecord("im", "t", "im.png", 10, 10, anns)
    return Dataset(catalog=catalog, images=[img])


def rf_from_counts(counts: list[int]) -> RankFrequency:
    entries = sorted(((i, c) for i, c in enumerate(counts)), key=lambda e: (-e[1], e[0]))
    return RankFrequency(entries)


class TestRankFrequency:
    def test_sorting(self):
        rf = rank_frequency(dataset_with_counts({0: 3, 1: 1}))
        assert rf.entries == [(0, 3), (1, 1)]

    def test_tie_by_class_id(self):
        rf = rank_frequency(dataset_with_counts({1: 2, 0: 2}))
        assert rf.entries == [(0, 2), (1, 2)]

    def test_counts_sum(self):
        ds = dataset_with_counts({0: 4, 1: 2, 2: 9})
        rf = rank_frequency(ds)
        assert sum(c for _, c in rf.entries) == ds.total_annotations()

    def test_zipf_corpus_ranks_match_construction(self):
        # f(r) proportional to 1/r: class c gets round(1200 / (c+1)) hits
        counts = {c: round(1200 / (c + 1)) for c in range(12)}
        rf = rank_frequency(dataset_with_counts(counts))
        assert [cid for cid, _ in rf.entries] == list(range(12))
        assert [n for _, n in rf.entries] == [counts[c] for c in range(12)]

    def test_empty_dataset_errors(self):
        with pytest.raises(ValueError):
            rank_frequency(Dataset())


class TestPowerLaw:
    def test_exact_inverse_law(self):
        counts = [1000.0 / r for r in range(1, 101)]
        fit = fit_power_law(rf_from_counts([int(round(c * 1e6)) for c in counts]))
        # counts scaled by 1e6 to keep integer precision; slope unaffected
        assert fit.slope == pytest.approx(-1.0, abs=1e-6)
        assert fit.r2 >= 0.999999

    def test_constant_counts_flat(self):
        fit = fit_power_law(rf_from_counts([7, 7, 7, 7]))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.r2 == 1.0

    def test_too_few_entries(self):
        with pytest.raises(ValueError):
            fit_power_law(rf_from_counts([5]))

    def test_zero_counts_excluded(self):
        with_zeros = rf_from_counts([100, 10, 0, 0])
        without = rf_from_counts([100, 10])
        a = fit_power_law(with_zeros)
        b = fit_power_law(without)
        assert a.slope == pytest.approx(b.slope)

    def test_scale_invariance(self):
        base = [int(1000 / r**1.3) + 1 for r in range(1, 40)]
        scaled = [c * 7 for c in base]
        a = fit_power_law(rf_from_counts(base))
        b = fit_power_law(rf_from_counts(scaled))
        assert b.slope == pytest.approx(a.slope, abs=1e-9)
        assert b.intercept == pytest.approx(a.intercept + math.log(7), abs=1e-9)


def broken_law_counts(break_rank=20, left_slope=-0.5, right_slope=-2.0, n=80, scale=1e6):
    """Continuous two-segment law in log-log space, exact by construction."""
    counts = []
    xb = math.log(break_rank)
    for r in range(1, n + 1):
        x = math.log(r)
        if x <= xb:
            y = left_slope * (x - xb)
        else:
            y = right_slope * (x - xb)
        counts.append(math.exp(y) * scale)
    return [int(round(c)) for c in counts]


class TestBrokenPowerLaw:
    def test_recovers_constructed_break(self):
        fit = fit_broken_power_law(rf_from_counts(broken_law_counts()))
        assert 18 <= fit.break_rank <= 22
        assert fit.left.slope == pytest.approx(-0.5, abs=0.05)
        assert fit.right.slope == pytest.approx(-2.0, abs=0.05)
        assert fit.r2_total > 0.999

    def test_nesting_never_fits_worse(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(5, 60))
            counts = [int(rng.integers(1, 10_000)) for _ in range(n)]
            rf = rf_from_counts(counts)
            single = fit_power_law(rf)
            broken = fit_broken_power_law(rf)
            assert broken.r2_total >= single.r2 - 1e-12

    def test_pure_single_law_nested(self):
        counts = [int(round(1e7 / r)) for r in range(1, 30)]
        rf = rf_from_counts(counts)
        assert fit_broken_power_law(rf).r2_total >= fit_power_law(rf).r2 - 1e-12

    def test_exhaustive_scan_matches_best_sse(self):
        # independent oracle: brute-force the hinge SSE at every break rank
        counts = broken_law_counts(break_rank=12, n=40)
        rf = rf_from_counts(counts)
        x = np.log(np.arange(1, 41))
        y = np.log(np.array(counts, dtype=float))
        best_br, best_sse = None, np.inf
        for br in range(2, 40):
            xb = x[br - 1]
            design = np.column_stack(
                [np.ones_like(x), np.minimum(x - xb, 0), np.maximum(x - xb, 0)]
            )
            params, *_ = np.linalg.lstsq(design, y, rcond=None)
            sse = float(np.sum((y - design @ params) ** 2))
            if sse < best_sse:
                best_sse, best_br = sse, br
        assert fit_broken_power_law(rf).break_rank == best_br

    def test_too_few_entries(self):
        with pytest.raises(ValueError):
            fit_broken_power_law(rf_from_counts([9, 5, 2]))

    def test_discontinuous_variant(self):
        fit = fit_broken_power_law(rf_from_counts(broken_law_counts()), continuous=False)
        assert not fit.continuous
        assert fit.left.slope == pytest.approx(-0.5, abs=0.05)
        assert fit.right.slope == pytest.approx(-2.0, abs=0.05)


class TestCoverage:
    def test_top1_of_half(self):
        assert coverage_topn(rf_from_counts([50, 30, 20]), 1) == pytest.approx(0.5)

    def test_full_coverage(self):
        rf = rf_from_counts([5, 4, 3, 2])
        assert coverage_topn(rf, 4) == pytest.approx(1.0)

    def test_monotone_in_n(self):
        rf = rf_from_counts([40, 25, 20, 10, 5])
        values = [coverage_topn(rf, n) for n in range(1, 6)]
        assert values == sorted(values)
        assert values[-1] == pytest.approx(1.0)

    def test_out_of_range(self):
        rf = rf_from_counts([5, 4])
        with pytest.raises(ValueError):
            coverage_topn(rf, 3)
        with pytest.raises(ValueError):
            coverage_topn(rf, 0)
