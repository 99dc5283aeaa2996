import numpy as np
import pytest

from puseg import seqdata
from puseg.seqdata import (
    Frame,
    PointAnnotation,
    Sequence,
    SequenceLoadError,
    load_masks,
    load_prob_maps,
    load_sequence,
    positives_from_annotations,
    save_masks,
    save_prob_maps,
    save_sequence,
)


def make_sequence(n=3, w=8, h=8, annotations=None, with_gt=False, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        img = np.rint(rng.random((h, w)) * 255.0) / 255.0
        anns = [PointAnnotation(i, *annotations[i])] if annotations else []
        gt = rng.random((h, w)) < 0.2 if with_gt else None
        frames.append(Frame(img, anns, gt))
    return Sequence(frames)


class TestLoadSave:
    def test_round_trip(self, tmp_path):
        seq = make_sequence(annotations=[(1, 2), (3, 4), (5, 6)], with_gt=True)
        save_sequence(seq, tmp_path)
        loaded = load_sequence(tmp_path)
        assert loaded.n_frames == 3
        assert loaded.width == 8 and loaded.height == 8
        for a, b in zip(seq.frames, loaded.frames):
            assert np.array_equal(a.intensities, b.intensities)
            assert np.array_equal(a.gt_mask, b.gt_mask)
            assert a.annotations == b.annotations

    def test_annotation_out_of_bounds(self, tmp_path):
        seq = make_sequence(annotations=[(1, 1), (2, 2), (3, 3)])
        save_sequence(seq, tmp_path)
        ann = tmp_path / "annotations.csv"
        ann.write_text("frame,x,y\n0,8,0\n")
        with pytest.raises(SequenceLoadError):
            load_sequence(tmp_path)

    def test_dimension_mismatch(self, tmp_path):
        seq = make_sequence(annotations=[(1, 1), (2, 2), (3, 3)])
        save_sequence(seq, tmp_path)
        big = np.zeros((16, 16), dtype=np.uint8)
        seqdata._write_pgm(tmp_path / "frames" / "001.pgm", big, 255)
        with pytest.raises(SequenceLoadError):
            load_sequence(tmp_path)

    def test_missing_frames_dir(self, tmp_path):
        with pytest.raises(SequenceLoadError):
            load_sequence(tmp_path)

    def test_mask_count_mismatch(self, tmp_path):
        seq = make_sequence(with_gt=True)
        save_sequence(seq, tmp_path)
        (tmp_path / "masks" / "002.pgm").unlink()
        with pytest.raises(SequenceLoadError):
            load_sequence(tmp_path)


class TestMasks:
    def test_round_trip(self, tmp_path):
        seq = make_sequence()
        rng = np.random.default_rng(1)
        masks = [rng.random((8, 8)) < 0.5 for _ in range(3)]
        save_masks(seq, masks, tmp_path / "out")
        loaded = load_masks(tmp_path / "out")
        assert all(np.array_equal(a, b) for a, b in zip(masks, loaded))

    def test_count_mismatch(self, tmp_path):
        seq = make_sequence()
        with pytest.raises(ValueError):
            save_masks(seq, [np.zeros((8, 8), bool)] * 2, tmp_path)

    def test_dim_mismatch(self, tmp_path):
        seq = make_sequence()
        with pytest.raises(ValueError):
            save_masks(seq, [np.zeros((4, 4), bool)] * 3, tmp_path)

    def test_all_zero(self, tmp_path):
        seq = make_sequence()
        save_masks(seq, [np.zeros((8, 8), bool)] * 3, tmp_path / "z")
        loaded = load_masks(tmp_path / "z")
        assert all(not m.any() for m in loaded)


class TestProbMaps:
    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(2)
        maps = [rng.random((6, 5)) for _ in range(2)]
        save_prob_maps(maps, tmp_path)
        loaded = load_prob_maps(tmp_path)
        for a, b in zip(maps, loaded):
            assert np.abs(a - b).max() <= 0.5 / 65535 + 1e-12


def frame_with_annotations(w, h, points):
    img = np.zeros((h, w))
    anns = [PointAnnotation(0, x, y) for x, y in points]
    return Sequence([Frame(img, anns)])


class TestPositiveSplit:
    def test_single_annotation_radius_one(self):
        seq = frame_with_annotations(20, 20, [(10, 10)])
        split = positives_from_annotations(seq, radius_frac=0.05)
        got = set(split.positives[0].tolist())
        expect = {10 * 20 + 10, 9 * 20 + 10, 11 * 20 + 10, 10 * 20 + 9, 10 * 20 + 11}
        assert got == expect

    def test_no_annotation(self):
        seq = Sequence([Frame(np.zeros((8, 8)))])
        split = positives_from_annotations(seq)
        assert split.positives[0].size == 0
        assert split.unlabeled[0].size == 64

    def test_union_of_overlapping_discs(self):
        seq = frame_with_annotations(30, 30, [(10, 10), (12, 10)])
        split = positives_from_annotations(seq, radius_frac=0.1)
        # brute force per-pixel distance scan
        r = 0.1 * 30
        expect = set()
        for y in range(30):
            for x in range(30):
                for ax, ay in [(10, 10), (12, 10)]:
                    if (x - ax) ** 2 + (y - ay) ** 2 <= r * r:
                        expect.add(y * 30 + x)
        assert set(split.positives[0].tolist()) == expect

    def test_partition(self):
        seq = frame_with_annotations(16, 12, [(5, 5)])
        split = positives_from_annotations(seq, radius_frac=0.2)
        p, u = split.positives[0], split.unlabeled[0]
        assert len(np.intersect1d(p, u)) == 0
        assert len(p) + len(u) == 16 * 12

    def test_monotone_in_radius(self):
        seq = frame_with_annotations(16, 16, [(8, 8)])
        small = set(positives_from_annotations(seq, 0.1).positives[0].tolist())
        large = set(positives_from_annotations(seq, 0.3).positives[0].tolist())
        assert small <= large

    def test_unlabeled_all_pixels_toggle(self):
        seq = frame_with_annotations(10, 10, [(5, 5)])
        split = positives_from_annotations(seq, 0.2, unlabeled_all_pixels=True)
        assert split.unlabeled[0].size == 100

    def test_bad_radius(self):
        seq = frame_with_annotations(10, 10, [(5, 5)])
        with pytest.raises(ValueError):
            positives_from_annotations(seq, 0.0)


class TestSequenceInvariants:
    def test_empty_sequence_rejected(self):
        with pytest.raises(SequenceLoadError):
            Sequence([])

    def test_annotation_bounds_checked(self):
        img = np.zeros((4, 4))
        with pytest.raises(SequenceLoadError):
            Sequence([Frame(img, [PointAnnotation(0, 4, 0)])])

    def test_gt_shape_checked(self):
        img = np.zeros((4, 4))
        with pytest.raises(SequenceLoadError):
            Sequence([Frame(img, [], np.zeros((3, 3), bool))])
