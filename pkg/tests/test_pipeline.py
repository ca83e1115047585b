from collections import deque

import numpy as np
import pytest

from unsupseg import (
    HyperParams,
    TrainingDiverged,
    apply_fixed,
    assign_labels,
    extract_segments,
    forward,
    init_params,
    segment,
    train_reference,
)
from unsupseg.losses import Scribbles
from unsupseg.synthetic import constant_image, two_region_image


def small_hp(**kw):
    defaults = dict(layers=2, feat_dim=8, max_labels=6, iters=10, seed=0, min_labels=1)
    defaults.update(kw)
    return HyperParams(**defaults)


def bfs_segments(labels):
    """Flood-fill reference segmentation (independent oracle)."""
    h, w = labels.shape
    seen = np.zeros((h, w), dtype=bool)
    masks = []
    source = []
    for sy in range(h):
        for sx in range(w):
            if seen[sy, sx]:
                continue
            value = labels[sy, sx]
            mask = np.zeros((h, w), dtype=bool)
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                mask[y, x] = True
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx]:
                        if labels[ny, nx] == value:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            masks.append(mask)
            source.append(int(value))
    return masks, source


class TestSegment:
    def test_constant_image_collapses_at_iteration_one(self):
        hp = small_hp(min_labels=3)
        result = segment(constant_image(12, 12), hp)
        assert result.unique_label_count == 1
        assert result.iterations_run == 1
        assert len(result.loss_history) == 1

    def test_min_labels_equal_q_stops_after_one_iteration(self):
        hp = small_hp(min_labels=6)
        result = segment(two_region_image(12), hp)
        assert result.iterations_run == 1

    def test_two_region_loss_decreases(self):
        hp = HyperParams(
            layers=3, feat_dim=24, max_labels=24, iters=40, min_labels=1, mu=5.0, seed=0
        )
        result = segment(two_region_image(24), hp)
        assert result.loss_history[-1].total < result.loss_history[0].total
        assert result.unique_label_count <= result.loss_history[0].unique_labels

    def test_early_stop_soundness(self):
        hp = small_hp(iters=50, min_labels=4)
        result = segment(two_region_image(16), hp)
        if result.iterations_run < hp.iters:
            assert result.unique_label_count <= hp.min_labels
        assert result.unique_label_count == np.unique(result.labels).size
        assert 1 <= result.unique_label_count <= hp.max_labels

    def test_reproducible(self):
        hp = small_hp(iters=5)
        img = two_region_image(12, seed=3)
        a = segment(img, hp)
        b = segment(img, hp)
        assert np.array_equal(a.labels, b.labels)
        for (_, x), (_, y) in zip(a.params.trainable_arrays(), b.params.trainable_arrays()):
            assert np.array_equal(x, y)
        assert [s.total for s in a.loss_history] == [s.total for s in b.loss_history]

    def test_scribble_shape_mismatch_rejected(self):
        hp = small_hp()
        scr = Scribbles(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 4), dtype=np.int32))
        with pytest.raises(ValueError):
            segment(two_region_image(12), hp, scr)

    def test_nonfinite_loss_aborts_with_iteration(self):
        hp = small_hp(iters=3)
        img = two_region_image(8)
        img[0, 0, 0] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(
            TrainingDiverged, match="iteration 1"
        ):
            segment(img, hp)

    def test_loss_history_records_every_iteration(self):
        hp = small_hp(iters=7, min_labels=1)
        result = segment(two_region_image(12), hp)
        assert len(result.loss_history) == result.iterations_run
        for rec in result.loss_history:
            assert np.isfinite(rec.total)
            assert rec.scr == 0.0


class TestTrainReference:
    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            train_reference([], small_hp())

    def test_constant_image_single_label_after_apply(self):
        hp = small_hp()
        img = constant_image(10, 10)
        params = train_reference([img], hp)
        labels = apply_fixed(params, img, hp)
        assert np.unique(labels).size == 1

    def test_deterministic(self):
        hp = small_hp()
        imgs = [two_region_image(10, seed=1), two_region_image(10, seed=2)]
        a = train_reference(imgs, hp)
        b = train_reference(imgs, hp)
        for (_, x), (_, y) in zip(a.trainable_arrays(), b.trainable_arrays()):
            assert np.array_equal(x, y)

    def test_k_copies_equal_k_loop_iterations(self):
        hp = small_hp(iters=4, min_labels=1)
        img = two_region_image(12, seed=5)
        looped = segment(img, hp)
        assert looped.iterations_run == 4  # no early stop in this regime
        repeated = train_reference([img] * 4, hp)
        for (_, x), (_, y) in zip(
            looped.params.trainable_arrays(), repeated.trainable_arrays()
        ):
            assert np.max(np.abs(x.astype(np.float64) - y.astype(np.float64))) < 1e-7

    def test_epochs_repeat_the_pass(self):
        hp = small_hp(iters=6, min_labels=1)
        img = two_region_image(12, seed=6)
        two_epochs = train_reference([img], hp, epochs=2)
        two_copies = train_reference([img, img], hp, epochs=1)
        for (_, x), (_, y) in zip(
            two_epochs.trainable_arrays(), two_copies.trainable_arrays()
        ):
            assert np.array_equal(x, y)

    def test_mixed_sizes_allowed(self):
        hp = small_hp()
        params = train_reference(
            [two_region_image(8), two_region_image(12)], hp
        )
        labels = apply_fixed(params, two_region_image(10), hp)
        assert labels.shape == (10, 10)


class TestApplyFixed:
    def test_pure_and_repeatable(self):
        hp = small_hp()
        params = train_reference([two_region_image(10)], hp)
        img = two_region_image(10, seed=9)
        before = [a.copy() for _, a in params.trainable_arrays()]
        l1 = apply_fixed(params, img, hp)
        l2 = apply_fixed(params, img, hp)
        assert np.array_equal(l1, l2)
        for prev, (_, now) in zip(before, params.trainable_arrays()):
            assert np.array_equal(prev, now)

    def test_constant_image_one_label(self):
        hp = small_hp()
        params = init_params(hp)
        labels = apply_fixed(params, constant_image(9, 7), hp)
        assert np.unique(labels).size == 1

    def test_equals_forward_plus_argmax(self):
        hp = small_hp(seed=4)
        params = init_params(hp)
        img = two_region_image(11, seed=8)
        expected = assign_labels(forward(img, params, hp)[1])
        assert np.array_equal(apply_fixed(params, img, hp), expected)

    def test_dimension_mismatch_rejected(self):
        hp = small_hp()
        params = init_params(hp)
        with pytest.raises(ValueError):
            apply_fixed(params, two_region_image(8), small_hp(feat_dim=9))


class TestExtractSegments:
    def test_constant_map_single_segment(self):
        segs = extract_segments(np.full((5, 7), 3, dtype=np.int32))
        assert len(segs.masks) == 1
        assert segs.masks[0].all()
        assert segs.source_labels == [3]

    def test_checkerboard_four_singletons(self):
        labels = np.array([[0, 1], [1, 0]], dtype=np.int32)
        segs = extract_segments(labels)
        assert len(segs.masks) == 4
        for m in segs.masks:
            assert m.sum() == 1
        assert segs.source_labels == [0, 1, 1, 0]  # scanline order

    def test_matches_bfs_oracle(self):
        rng = np.random.default_rng(21)
        labels = rng.integers(0, 3, size=(16, 16)).astype(np.int32)
        segs = extract_segments(labels)
        masks, source = bfs_segments(labels)
        assert len(segs.masks) == len(masks)
        for got, want in zip(segs.masks, masks):
            assert np.array_equal(got, want)
        assert segs.source_labels == source

    def test_structural_invariants(self):
        rng = np.random.default_rng(22)
        labels = rng.integers(0, 4, size=(12, 10)).astype(np.int32)
        segs = extract_segments(labels)
        total = np.zeros(labels.shape, dtype=int)
        for m in segs.masks:
            assert m.any()
            total += m.astype(int)
            # 4-connectivity: some flood-fill region must equal the whole mask
            sub_masks, _ = bfs_segments(np.where(m, 1, 0))
            assert any(np.array_equal(sm, m) for sm in sub_masks)
        assert np.all(total == 1)  # disjoint and exhaustive
