"""Subject-mask extraction: averaging, thresholding, masses."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codi.errors import ShapeError, ValidationError
from codi.masks import (
    average_attention,
    extract_subject,
    importance_weights,
    otsu_threshold,
    saliency_histogram,
)
from oracles import otsu_split_scan


def test_average_attention_over_layers_and_positions():
    stack = np.zeros((2, 3, 2))
    stack[0] = [[1, 3], [0, 0], [2, 2]]
    stack[1] = [[5, 7], [4, 4], [2, 2]]
    np.testing.assert_allclose(average_attention(stack), [4.0, 2.0, 2.0])


def test_average_attention_accepts_layer_list():
    layers = [np.ones((4, 3)), 3 * np.ones((4, 3))]
    np.testing.assert_allclose(average_attention(layers), 2 * np.ones(4))
    with pytest.raises(ShapeError):
        average_attention([np.ones((4, 3)), np.ones((5, 3))])


def test_otsu_separates_bimodal_map():
    threshold, mask = otsu_threshold(np.array([0.1, 0.1, 0.9, 0.9]))
    assert list(mask) == [False, False, True, True]
    assert 0.1 < threshold < 0.9


def test_otsu_threshold_lives_in_value_units():
    values = np.array([10.0, 10.0, 11.0, 30.0, 31.0, 30.5])
    threshold, mask = otsu_threshold(values)
    assert 11.0 < threshold < 30.0
    assert np.array_equal(mask, values > threshold)


def test_otsu_boundary_is_strictly_greater():
    # The mask uses strict comparison, so a saliency exactly equal to
    # the returned threshold belongs to the background.
    values = np.array([0.1, 0.1, 0.9, 0.9])
    threshold, mask = otsu_threshold(values)
    assert np.array_equal(mask, values > threshold)
    assert not (values == threshold).any() or not mask[values == threshold].any()


def test_otsu_degenerate_all_equal_masks_everything():
    threshold, mask = otsu_threshold(np.full(7, 0.25))
    assert threshold == 0.25
    assert mask.all()


def test_otsu_agrees_with_exhaustive_scan():
    # Plateaus of equal variance are common (empty-bin runs), so this
    # also exercises the first-argmax tie rule against the oracle.
    from codi.masks import _between_class_variance

    rng = np.random.default_rng(11)
    for _ in range(60):
        values = rng.random(rng.integers(4, 80))
        if values.max() == values.min():
            continue
        hist = saliency_histogram(values)
        impl_split = int(np.argmax(_between_class_variance(hist)))
        assert impl_split == otsu_split_scan(values)


def test_histogram_bins_cover_range():
    values = np.array([0.0, 0.999, 1.0, 0.5])
    hist = saliency_histogram(values)
    assert hist.sum() == 4
    assert hist[255] == 2  # max value and 0.999 both land in the top bin
    assert hist[0] == 1
    assert hist[128] == 1


def test_importance_weights_softmax_example():
    saliency = np.array([math.log(1.0), math.log(3.0)])
    weights = importance_weights(saliency, np.array([True, True]))
    np.testing.assert_allclose(weights, [0.25, 0.75], atol=1e-12)


def test_importance_weights_shift_invariant():
    saliency = np.array([0.3, 1.1, -0.4, 2.2])
    mask = np.array([True, False, True, True])
    w1 = importance_weights(saliency, mask)
    w2 = importance_weights(saliency + 123.0, mask)
    np.testing.assert_allclose(w1, w2, atol=1e-12)
    assert w1.size == 3


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=40),
)
def test_importance_weights_are_a_distribution(values):
    saliency = np.array(values)
    weights = importance_weights(saliency, np.ones(saliency.size, dtype=bool))
    assert (weights > 0).all()
    assert abs(weights.sum() - 1.0) < 1e-9


def test_importance_weights_empty_mask_rejected():
    with pytest.raises(ValidationError):
        importance_weights(np.array([1.0, 2.0]), np.array([False, False]))


def test_extract_subject_keeps_row_order():
    feats = np.arange(12.0).reshape(4, 3)
    mask = np.array([True, False, True, True])
    out = extract_subject(feats, mask)
    np.testing.assert_array_equal(out, feats[[0, 2, 3]])
    with pytest.raises(ShapeError):
        extract_subject(feats, np.array([True, False]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1), min_size=2, max_size=64))
def test_otsu_mask_is_strictly_above_threshold(values):
    saliency = np.array(values)
    threshold, mask = otsu_threshold(saliency)
    if saliency.max() == saliency.min():
        assert mask.all()
    elif mask.all():
        # repaired all-ones mask when nothing cleared the threshold
        assert (saliency <= threshold).all() or (saliency > threshold).all()
    else:
        assert np.array_equal(mask, saliency > threshold)
