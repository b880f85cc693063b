import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from memvos.metrics import boundary, boundary_f, default_tolerance, evaluate_video, jaccard, jf_score
from memvos.numerics import ContractError


def square(size=32, top=8, left=8, side=16):
    m = np.zeros((size, size), bool)
    m[top:top + side, left:left + side] = True
    return m


random_masks = st.integers(0, 2**31).map(
    lambda s: np.random.default_rng(s).random((2, 12, 14)) < np.random.default_rng(s + 1).uniform(0.1, 0.9))


class TestJaccard:
    def test_identical(self):
        assert jaccard(square(), square()) == 1

    def test_disjoint(self):
        assert jaccard(square(top=0, side=8), square(top=20, side=8)) == 0

    def test_partial_overlap(self):
        a = np.zeros((16, 16), bool)
        b = np.zeros((16, 16), bool)
        a[0:8, 0:8] = True
        b[4:12, 0:8] = True
        assert jaccard(a, b) == pytest.approx(1 / 3, abs=1e-6)

    def test_both_empty(self):
        assert jaccard(np.zeros((3, 3)), np.zeros((3, 3))) == 1

    def test_extent_mismatch(self):
        with pytest.raises(ContractError):
            jaccard(np.zeros((3, 3)), np.zeros((3, 4)))

    @settings(max_examples=40, deadline=None)
    @given(random_masks)
    def test_symmetry_and_flip(self, pair):
        a, b = pair
        assert jaccard(a, b) == jaccard(b, a)
        assert jaccard(a[:, ::-1], b[:, ::-1]) == jaccard(a, b)

    def test_growing_intersection(self):
        gt = square()
        union = square(top=4, left=4, side=24)
        prev = -1.0
        # keep the union fixed while moving gt pixels into pred
        for k in range(0, 257, 32):
            pred = union & ~gt
            pred.flat[np.flatnonzero(gt)[:k]] = True
            score = jaccard(pred, gt | union)
            assert score >= prev
            prev = score


class TestBoundary:
    def test_square_boundary_ring(self):
        b = boundary(square(size=10, top=2, left=2, side=5))
        assert b.sum() == 16
        assert not b[4, 4]

    def test_image_edge_counts(self):
        assert boundary(np.ones((3, 3))).sum() == 8

    def test_matches_oracle_pixels(self, rng):
        m = rng.random((11, 9)) < 0.6
        assert sorted(zip(*np.nonzero(boundary(m)))) == oracles.boundary_pixels(m)


class TestBoundaryF:
    def test_identical(self):
        assert boundary_f(square(), square(), tol=0) == 1

    def test_pred_empty(self):
        assert boundary_f(np.zeros((32, 32)), square()) == 0

    def test_both_empty(self):
        assert boundary_f(np.zeros((5, 5)), np.zeros((5, 5))) == 1

    @pytest.mark.parametrize("tol,expected", [(1, 1.0), (0, 0.5)])
    def test_one_pixel_shift(self, tol, expected):
        a, b = square(), square(left=9)
        assert boundary_f(a, b, tol) == pytest.approx(oracles.boundary_f(a, b, tol), abs=1e-6)
        assert boundary_f(a, b, tol) == pytest.approx(expected, abs=1e-6)

    def test_default_tolerance(self):
        assert default_tolerance((480, 854)) == math.ceil(0.008 * math.hypot(480, 854)) == 8
        assert default_tolerance((64, 64)) == 1

    def test_negative_tolerance(self):
        with pytest.raises(ContractError):
            boundary_f(square(), square(), tol=-1)

    @settings(max_examples=30, deadline=None)
    @given(random_masks, st.sampled_from([0, 1, 1.5, 3]))
    def test_against_oracle(self, pair, tol):
        a, b = pair
        f = boundary_f(a, b, tol)
        assert f == pytest.approx(oracles.boundary_f(a, b, tol), abs=1e-6)
        assert f == pytest.approx(boundary_f(b, a, tol), abs=1e-12)
        assert f == pytest.approx(boundary_f(a[:, ::-1], b[:, ::-1], tol), abs=1e-12)


class TestSummary:
    def test_perfect(self):
        assert jf_score([1, 1, 1], [1, 1, 1]) == {"J": 100, "F": 100, "JF": 100}

    def test_two_values(self):
        assert jf_score([1, 0], [1, 0]) == {"J": 50, "F": 50, "JF": 50}

    def test_mixed_table(self):
        j = [[0.9, 0.5], [0.7, 0.3], [1.0, 0.6]]
        f = [[0.8, 0.4], [0.6, 0.2], [1.0, 0.8]]
        out = jf_score(j, f)
        assert out["J"] == pytest.approx(100 * 4.0 / 6, abs=1e-6)
        assert out["F"] == pytest.approx(100 * 3.8 / 6, abs=1e-6)
        assert out["JF"] == pytest.approx((out["J"] + out["F"]) / 2, abs=1e-9)

    def test_empty(self):
        with pytest.raises(ContractError):
            jf_score([], [])


class TestEvaluateVideo:
    def test_first_frame_excluded(self):
        gt = [square().astype(np.uint8)] * 3
        pred = [np.zeros((32, 32), np.uint8)] + gt[1:]
        assert evaluate_video(pred, gt)["JF"] == 100

    def test_two_frame_arithmetic(self):
        # frames 1 and 2 scored: one perfect, one empty prediction
        gt = [square().astype(np.uint8)] * 3
        pred = [gt[0], gt[1], np.zeros((32, 32), np.uint8)]
        assert evaluate_video(pred, gt) == {"J": 50, "F": 50, "JF": 50}

    def test_single_frame(self):
        gt = [square().astype(np.uint8)]
        assert evaluate_video(gt, gt)["JF"] == 100

    def test_absent_object_correctly_absent(self):
        gt = [square().astype(np.uint8), np.zeros((32, 32), np.uint8)]
        assert evaluate_video([gt[0], gt[1]], gt)["JF"] == 100

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            evaluate_video([np.zeros((2, 2))], [np.zeros((2, 2))] * 2)
