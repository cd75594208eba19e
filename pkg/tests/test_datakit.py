"""
SpadVision Dataset Construction Tests

Tests for labels and dataset preparation:
- Label boxes and their text form
- One-hot ground truth and visualization colours
- Horizontal-flip augmentation
- Seeded train/validation splitting
"""

import numpy as np
import pytest

from spadvision.datakit import (
    CLASS_NAMES,
    DEFAULT_PALETTE,
    Example,
    LabelBox,
    augment,
    boxes_to_onehot,
    class_map_to_onehot,
    fisher_yates,
    hflip,
    labels_from_text,
    labels_to_text,
    onehot_to_class_map,
    onehot_to_rgb,
    shuffle_split,
)
from spadvision.errors import DatasetError, ShapeMismatchError
from spadvision.sensor import GRID_H, GRID_W, N_BINS, N_CHANNELS


class TestLabelBoxes:
    """Test label boxes."""

    def test_text_form(self, sample_boxes):
        """Test the ``class:x,y,w,h`` text form."""
        text = labels_to_text(sample_boxes)
        assert text == "4:6,8,8,8;2:30,6,10,16"
        assert labels_from_text(text) == sample_boxes
        assert labels_from_text("") == ()

    def test_invalid_boxes(self):
        """Test class and size validation."""
        with pytest.raises(DatasetError):
            LabelBox(0, 0, 0, 4, 4)
        with pytest.raises(DatasetError):
            LabelBox(1, 0, 0, 0, 4)
        with pytest.raises(DatasetError):
            LabelBox.from_text("3:1,2,3")
        with pytest.raises(DatasetError):
            LabelBox(1, 60, 0, 8, 4).mask(GRID_H, GRID_W)

    def test_scaled(self):
        """Test scaling a box to the SPAD grid."""
        assert LabelBox(3, 2, 5, 4, 6).scaled(4) == LabelBox(3, 8, 20, 16, 24)


class TestOneHot:
    """Test one-hot ground truth and colouring."""

    def test_no_boxes_is_background(self):
        """Test that an empty frame is all background."""
        mask = boxes_to_onehot([])
        assert mask.shape == (GRID_H, GRID_W, N_CHANNELS)
        assert mask.dtype == np.uint8
        assert np.all(mask[..., 0] == 1)
        assert np.all(mask[..., 1:] == 0)

    def test_full_frame_box(self):
        """Test a box covering the whole frame."""
        mask = boxes_to_onehot([LabelBox(3, 0, 0, GRID_W, GRID_H)])
        assert np.all(mask[..., 3] == 1)
        assert np.all(mask[..., 0] == 0)

    def test_overlap_sets_both_channels(self):
        """Test that overlapping boxes of two classes set both channels."""
        mask = boxes_to_onehot([LabelBox(2, 0, 0, 10, 10), LabelBox(5, 5, 5, 10, 10)])
        assert mask[7, 7, 2] == 1 and mask[7, 7, 5] == 1
        assert mask[7, 7, 0] == 0
        assert mask[2, 2, 5] == 0

    def test_box_outside_grid(self):
        """Test that boxes leaving the grid are rejected."""
        with pytest.raises(DatasetError):
            boxes_to_onehot([LabelBox(1, 60, 0, 8, 4)])

    def test_rgb_priority(self):
        """Test that overlap pixels take the highest class colour."""
        mask = boxes_to_onehot([LabelBox(2, 0, 0, 10, 10), LabelBox(5, 5, 5, 10, 10)])
        rgb = onehot_to_rgb(mask)
        assert rgb.shape == (GRID_H, GRID_W, 3)
        np.testing.assert_array_equal(rgb[7, 7], DEFAULT_PALETTE[5])
        np.testing.assert_array_equal(rgb[2, 2], DEFAULT_PALETTE[2])
        np.testing.assert_array_equal(rgb[30, 60], DEFAULT_PALETTE[0])

    def test_rgb_validation(self):
        """Test mask and palette shapes."""
        with pytest.raises(ShapeMismatchError):
            onehot_to_rgb(np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises(ShapeMismatchError):
            onehot_to_rgb(boxes_to_onehot([]), palette=np.zeros((3, 3)))

    def test_class_map_round_trip(self, sample_boxes):
        """Test conversion between class maps and one-hot masks."""
        class_map = onehot_to_class_map(boxes_to_onehot(sample_boxes))
        assert class_map[10, 8] == 4
        assert class_map[0, 0] == 0
        np.testing.assert_array_equal(onehot_to_class_map(class_map_to_onehot(class_map)), class_map)
        assert len(CLASS_NAMES) == N_CHANNELS


class TestAugmentation:
    """Test horizontal-flip augmentation."""

    def test_flip_box_coordinates(self):
        """Test x -> W - x - w."""
        example = Example({"hist": np.zeros((GRID_H, GRID_W, N_BINS), dtype=np.uint16)},
                          (LabelBox(1, 3, 2, 4, 5),))
        assert hflip(example).labels == (LabelBox(1, 57, 2, 4, 5),)

    def test_flip_is_involution(self, rng, sample_boxes):
        """Test that flipping twice restores the example bit for bit."""
        hist = rng.integers(0, 100, (GRID_H, GRID_W, N_BINS)).astype(np.uint16)
        example = Example({"hist": hist}, sample_boxes, {"frame": 3})
        once = hflip(example)
        twice = hflip(once)
        np.testing.assert_array_equal(twice.tensors["hist"], hist)
        assert twice.labels == sample_boxes
        # Only the width axis moves; the bin axis is untouched
        np.testing.assert_array_equal(once.tensors["hist"][:, 0, :], hist[:, -1, :])

    def test_flip_matches_mask_flip(self, sample_boxes):
        """Test that flipped boxes produce the mirrored ground truth."""
        example = Example({}, sample_boxes)
        flipped = boxes_to_onehot(hflip(example).labels)
        np.testing.assert_array_equal(flipped, boxes_to_onehot(sample_boxes)[:, ::-1])

    def test_augment_doubles(self, sample_boxes):
        """Test that originals come first, then their flips."""
        examples = [Example({"x": np.arange(GRID_W)[None, :]}, sample_boxes) for _ in range(3)]
        out = augment(examples)
        assert len(out) == 6
        assert out[0] is examples[0]
        assert out[3].tensors["x"][0, 0] == GRID_W - 1


class TestSplitting:
    """Test seeded shuffling and validation splits."""

    def test_fisher_yates_is_permutation(self):
        """Test that the shuffle is a seeded permutation."""
        order = fisher_yates(50, np.random.default_rng(1))
        assert sorted(order) == list(range(50))
        assert order == fisher_yates(50, np.random.default_rng(1))

    def test_split_sizes(self):
        """Test that the last ceil(fraction * N) ids form the validation set."""
        train, val = shuffle_split(100, seed=0, val_fraction=0.15)
        assert len(val) == 15 and len(train) == 85
        assert sorted(train + val) == list(range(100))
        train, val = shuffle_split(10, seed=0, val_fraction=0.15)
        assert len(val) == 2

    def test_split_is_deterministic(self):
        """Test that the split is a function of (ids, seed)."""
        assert shuffle_split(list(range(5, 25)), 3) == shuffle_split(list(range(5, 25)), 3)
        assert shuffle_split(20, 3) != shuffle_split(20, 4)

    def test_split_edge_cases(self):
        """Test empty datasets and extreme fractions."""
        with pytest.raises(DatasetError):
            shuffle_split([], 0)
        with pytest.raises(DatasetError):
            shuffle_split(10, 0, val_fraction=1.5)
        train, val = shuffle_split(4, 0, val_fraction=0.0)
        assert len(train) == 4 and val == []
