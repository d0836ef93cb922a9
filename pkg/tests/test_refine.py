"""Attention filtering: selection, renormalization, refinement."""

import numpy as np
import pytest

from codi.errors import ParameterError, ShapeError, ValidationError
from codi.refine import (
    AttentionBundle,
    cross_image_scores,
    filter_and_renormalize,
    refine_attention,
    select_top_alpha,
)
from oracles import filtered_attention_rows


def _bundle(rng, q_rows=5, self_rows=6, ref_rows=4, width=8):
    return AttentionBundle(
        q=rng.standard_normal((q_rows, width)),
        k_self=rng.standard_normal((self_rows, width)),
        v_self=rng.standard_normal((self_rows, width)),
        k_ref=rng.standard_normal((ref_rows, width)),
        v_ref=rng.standard_normal((ref_rows, width)),
    )


def test_select_top_alpha_half_of_four():
    sel = select_top_alpha(np.array([0.1, 0.9, 0.5, 0.7]), 0.5)
    assert list(sel) == [1, 3]


def test_select_top_alpha_all_equal_prefers_low_indices():
    sel = select_top_alpha(np.array([0.25, 0.25, 0.25, 0.25]), 0.5)
    assert list(sel) == [0, 1]


def test_select_top_alpha_keeps_at_least_one():
    sel = select_top_alpha(np.array([3.0, 1.0, 2.0]), 1.0 / 3.0)
    assert list(sel) == [0]
    sel = select_top_alpha(np.array([1.0, 5.0]), 1e-9)
    assert list(sel) == [1]


def test_select_top_alpha_matches_sort_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        size = int(rng.integers(1, 30))
        # quantized scores make ties frequent
        scores = np.round(rng.random(size), 1)
        alpha = float(rng.uniform(0.05, 1.0))
        k = max(1, int(np.ceil(alpha * size)))
        expected = sorted(sorted(range(size), key=lambda i: (-scores[i], i))[:k])
        assert list(select_top_alpha(scores, alpha)) == expected


def test_select_top_alpha_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        select_top_alpha(np.ones(4), 0.0)
    with pytest.raises(ParameterError):
        select_top_alpha(np.ones(4), 1.5)
    with pytest.raises(ShapeError):
        select_top_alpha(np.ones(0), 0.5)


def test_cross_image_scores_rows_are_distributions():
    rng = np.random.default_rng(9)
    bundle = _bundle(rng)
    A = cross_image_scores(bundle)
    assert A.shape == (5, 10)
    assert (A > 0).all()
    assert np.abs(A.sum(axis=1) - 1.0).max() < 1e-12


def test_filter_pinned_row():
    # Two self keys, two reference keys, uniform row, keep reference 0:
    # the dropped quarter redistributes over the three kept columns.
    A = np.array([[0.25, 0.25, 0.25, 0.25]])
    out = filter_and_renormalize(A, np.array([0]), self_keys=2)
    np.testing.assert_allclose(out, [[1 / 3, 1 / 3, 1 / 3, 0.0]], atol=1e-15)


def test_filter_literal_divides_by_selected_mass_only():
    A = np.array([[0.25, 0.25, 0.25, 0.25]])
    out = filter_and_renormalize(A, np.array([0]), self_keys=2, literal=True)
    np.testing.assert_allclose(out, [[1.0, 1.0, 1.0, 0.0]], atol=1e-15)


def test_filter_full_selection_is_identity_bitwise():
    rng = np.random.default_rng(21)
    A = rng.random((4, 7))
    out = filter_and_renormalize(A, np.arange(3), self_keys=4)
    assert np.array_equal(out, A)


def test_filter_rejects_empty_or_out_of_range_selection():
    A = np.ones((2, 5)) / 5
    with pytest.raises(ValidationError):
        filter_and_renormalize(A, np.array([], dtype=int), self_keys=3)
    with pytest.raises(ShapeError):
        filter_and_renormalize(A, np.array([2]), self_keys=3)


def test_refine_matches_loop_oracle():
    rng = np.random.default_rng(33)
    for literal in (False, True):
        bundle = _bundle(rng)
        selected = np.array([0, 2])
        out = refine_attention(bundle, selected, literal=literal)
        expected = filtered_attention_rows(
            bundle.q, bundle.k_self, bundle.k_ref, bundle.v_self, bundle.v_ref,
            selected, literal=literal,
        )
        np.testing.assert_allclose(out, expected, atol=1e-12)


def test_refine_full_selection_equals_plain_attention():
    rng = np.random.default_rng(41)
    bundle = _bundle(rng)
    out = refine_attention(bundle, np.arange(4))
    keys = np.concatenate([bundle.k_self, bundle.k_ref])
    values = np.concatenate([bundle.v_self, bundle.v_ref])
    logits = bundle.q @ keys.T / np.sqrt(8.0)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    plain = (z / z.sum(axis=1, keepdims=True)) @ values
    np.testing.assert_allclose(out, plain, atol=1e-6)


def test_refine_is_untouched_by_other_bundles():
    # Computing a refinement for an unrelated bundle in between must not
    # change the result for this one, bit for bit.
    rng = np.random.default_rng(55)
    bundle = _bundle(rng)
    selected = np.array([1, 3])
    before = refine_attention(bundle, selected)
    other = _bundle(np.random.default_rng(56))
    refine_attention(other, np.array([0]))
    after = refine_attention(bundle, selected)
    assert np.array_equal(before, after)


def test_bundle_validates_shapes_and_values():
    rng = np.random.default_rng(60)
    with pytest.raises(ShapeError):
        AttentionBundle(
            q=rng.standard_normal((2, 4)),
            k_self=rng.standard_normal((3, 4)),
            v_self=rng.standard_normal((2, 4)),  # mismatched with k_self
            k_ref=rng.standard_normal((2, 4)),
            v_ref=rng.standard_normal((2, 4)),
        )
    with pytest.raises(ShapeError):
        AttentionBundle(
            q=rng.standard_normal((2, 4)),
            k_self=rng.standard_normal((3, 5)),  # width mismatch
            v_self=rng.standard_normal((3, 5)),
            k_ref=rng.standard_normal((2, 4)),
            v_ref=rng.standard_normal((2, 4)),
        )
    bad = rng.standard_normal((2, 4))
    bad[0, 0] = np.nan
    with pytest.raises(ValidationError):
        AttentionBundle(
            q=bad,
            k_self=rng.standard_normal((3, 4)),
            v_self=rng.standard_normal((3, 4)),
            k_ref=rng.standard_normal((2, 4)),
            v_ref=rng.standard_normal((2, 4)),
        )
