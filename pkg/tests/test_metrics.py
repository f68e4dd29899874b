import logging

import numpy as np
import pytest

from partvid.config import GlcmConfig
from partvid.dataio import scan_dataset
from partvid.metrics import (
    FrameScore,
    aggregate,
    clip_complexity,
    complexity_histogram,
    contour_f,
    default_boundary_tolerance,
    glcm_entropy,
    jaccard,
    mask_boundary,
    temporal_quarters,
)

from oracles import contour_f_loop, decay_loop, glcm_entropy_loop, jaccard_loop


def square(size, top, left, side):
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[top:top + side, left:left + side] = 1
    return mask


class TestJaccard:
    def test_identical_and_disjoint(self):
        a = square(16, 2, 2, 6)
        assert jaccard(a, a) == 1.0
        b = square(16, 10, 10, 4)
        assert jaccard(a, b) == 0.0

    def test_both_empty(self):
        z = np.zeros((8, 8), dtype=np.uint8)
        assert jaccard(z, z) == 1.0

    def test_half_coverage(self):
        gt = square(16, 4, 4, 8)
        pred = np.zeros_like(gt)
        pred[4:12, 4:8] = 1  # covers exactly half of gt, nothing extra
        assert jaccard(pred, gt) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            jaccard(np.zeros((4, 4)), np.zeros((5, 5)))

    def test_symmetry_random(self, rng):
        for _ in range(20):
            a = rng.random((12, 12)) > 0.6
            b = rng.random((12, 12)) > 0.6
            assert jaccard(a, b) == jaccard(b, a)
            assert abs(jaccard(a, b) - jaccard_loop(a, b)) < 1e-12


class TestContourF:
    def test_identical(self):
        a = square(32, 8, 8, 10)
        assert contour_f(a, a) == 1.0

    def test_empty_prediction(self):
        gt = square(32, 8, 8, 10)
        assert contour_f(np.zeros_like(gt), gt) == 0.0
        assert contour_f(gt, np.zeros_like(gt)) == 0.0
        assert contour_f(np.zeros_like(gt), np.zeros_like(gt)) == 1.0

    def test_one_pixel_shift_within_tolerance(self):
        gt = square(32, 10, 10, 10)
        pred = square(32, 10, 11, 10)
        assert contour_f(pred, gt, tolerance_px=2) == 1.0

    def test_monotone_under_growing_shift(self):
        gt = square(64, 20, 10, 16)
        scores = []
        for shift in (4, 8, 14):
            pred = square(64, 20, 10 + shift, 16)
            scores.append(contour_f(pred, gt, tolerance_px=2))
        assert scores[0] >= scores[1] >= scores[2]

    def test_boundary_extraction_matches_loop(self, rng):
        from oracles import boundary_loop

        for _ in range(10):
            mask = rng.random((10, 10)) > 0.55
            np.testing.assert_array_equal(mask_boundary(mask), boundary_loop(mask))

    def test_random_masks_match_loop_oracle(self, rng):
        for _ in range(8):
            pred = rng.random((20, 20)) > 0.6
            gt = rng.random((20, 20)) > 0.6
            mine = contour_f(pred, gt, tolerance_px=2)
            ref = contour_f_loop(pred, gt, tol=2)
            assert abs(mine - ref) < 1e-9

    def test_default_tolerance(self):
        # 0.8% of the 480x854 diagonal is ~7.84 -> rounds up to 8
        assert default_boundary_tolerance((480, 854)) == 8
        assert default_boundary_tolerance((10, 10)) == 1


def scores_from(values, clip_id="c0"):
    return [FrameScore(clip_id, i, v, v) for i, v in enumerate(values)]


class TestAggregate:
    def test_constant_scores(self):
        report = aggregate(scores_from([0.9] * 8))
        assert report.j.mean == pytest.approx(0.9)
        assert report.j.recall == 1.0
        assert report.j.decay == 0.0
        assert report.f.decay == 0.0
        assert report.jf_mean == pytest.approx(0.9)

    def test_linear_decay_over_eight_frames(self):
        values = [1 - i / 7 for i in range(8)]
        report = aggregate(scores_from(values))
        assert report.j.decay == pytest.approx(0.8571428571428572)
        assert report.j.decay == pytest.approx(decay_loop(values))

    def test_low_scores_zero_recall(self):
        report = aggregate(scores_from([0.4] * 6))
        assert report.j.recall == 0.0
        # strict threshold: exactly 0.5 does not count
        report = aggregate(scores_from([0.5] * 6))
        assert report.j.recall == 0.0

    def test_short_clip_excluded_from_decay(self, caplog):
        scores = scores_from([0.2, 0.9, 0.9], "short") + scores_from([0.8] * 8, "long")
        with caplog.at_level(logging.WARNING):
            report = aggregate(scores)
        assert "short" in caplog.text
        assert report.j.decay == 0.0  # only the constant clip contributes

    def test_mean_is_permutation_invariant(self, rng):
        a = scores_from(list(rng.random(6)), "a")
        b = scores_from(list(rng.random(9)), "b")
        r1 = aggregate(a + b)
        r2 = aggregate(b + a)
        assert r1.j.mean == pytest.approx(r2.j.mean, abs=1e-12)
        assert r1.per_clip == r2.per_clip

    def test_quarter_sizes(self):
        assert temporal_quarters(8) == [(0, 2), (2, 4), (4, 6), (6, 8)]
        assert [b - a for a, b in temporal_quarters(10)] == [2, 3, 3, 2]
        assert [b - a for a, b in temporal_quarters(11)] == [2, 4, 3, 2]

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestGlcmEntropy:
    def test_constant_image(self):
        assert glcm_entropy(np.full((32, 32), 99, dtype=np.uint8)) == 0.0

    def test_checkerboard_one_bit(self):
        pattern = np.indices((16, 16)).sum(axis=0) % 2
        image = (pattern * 255).astype(np.uint8)
        assert glcm_entropy(image, levels=2, offsets=((1, 0),)) == pytest.approx(1.0)

    def test_uniform_noise_approaches_six_bits(self):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, size=(512, 512), dtype=np.uint8)
        entropy = glcm_entropy(image, levels=8)
        assert abs(entropy - 6.0) < 0.2

    def test_bound_and_relabel_invariance(self, rng):
        image = rng.integers(0, 256, size=(24, 24)).astype(np.uint8)
        levels = 4
        entropy = glcm_entropy(image, levels=levels)
        assert entropy <= 2 * np.log2(levels) + 1e-9
        # shifting values inside each quantization bin leaves entropy unchanged
        bin_width = 256 // levels
        relabeled = (image // bin_width) * bin_width  # snap to bin floor
        assert glcm_entropy(relabeled, levels=levels) == pytest.approx(entropy)

    def test_matches_loop_oracle(self, rng):
        image = rng.integers(0, 256, size=(9, 9)).astype(np.uint8)
        offsets = ((1, 0), (0, 1), (1, -1))
        mine = glcm_entropy(image, levels=5, offsets=offsets)
        ref = glcm_entropy_loop(image, levels=5, offsets=offsets)
        assert abs(mine - ref) < 1e-9

    def test_image_smaller_than_offset(self):
        with pytest.raises(ValueError):
            glcm_entropy(np.zeros((1, 4), dtype=np.uint8), offsets=((0, 1),))
        with pytest.raises(ValueError):
            glcm_entropy(np.zeros((4, 4), dtype=np.uint8), levels=1)


class TestClipComplexity:
    def test_constant_frames(self, tmp_path):
        import cv2

        sets = tmp_path / "ImageSets"
        sets.mkdir()
        (sets / "train.txt").write_text("flat\n")
        frame_dir = tmp_path / "JPEGImages" / "flat"
        frame_dir.mkdir(parents=True)
        for i in range(3):
            cv2.imwrite(str(frame_dir / f"{i:05d}.jpg"),
                        np.full((32, 32, 3), 128, dtype=np.uint8))
        (tmp_path / "Annotations" / "flat").mkdir(parents=True)
        (clip,) = scan_dataset(tmp_path, "train")
        mean, per_frame = clip_complexity(clip, GlcmConfig(resize_short=None))
        assert mean == 0.0
        assert per_frame == [0.0, 0.0, 0.0]

    def test_mean_of_mixed_frames(self, tmp_path):
        import cv2

        sets = tmp_path / "ImageSets"
        sets.mkdir()
        (sets / "train.txt").write_text("mix\n")
        frame_dir = tmp_path / "JPEGImages" / "mix"
        frame_dir.mkdir(parents=True)
        cv2.imwrite(str(frame_dir / "00000.jpg"), np.full((32, 32, 3), 60, dtype=np.uint8))
        noise = np.random.default_rng(1).integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        # PNG-free path: JPEG is lossy, so compare to per-frame values, not constants
        cv2.imwrite(str(frame_dir / "00001.jpg"), noise)
        (tmp_path / "Annotations" / "mix").mkdir(parents=True)
        (clip,) = scan_dataset(tmp_path, "train")
        mean, per_frame = clip_complexity(clip, GlcmConfig(resize_short=None))
        assert mean == pytest.approx(sum(per_frame) / len(per_frame))
        assert per_frame[1] > per_frame[0]


def test_complexity_histogram_two_columns():
    centers, freq = complexity_histogram([1.0, 1.1, 2.9, 3.0], bins=4)
    assert len(centers) == len(freq) == 4
    assert freq.sum() == 4
