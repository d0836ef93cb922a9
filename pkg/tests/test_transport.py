"""Optimal transport: costs, the simplex solver, feature movement."""

import numpy as np
import pytest

from codi.errors import (
    InfeasibleMassesError,
    ParameterError,
    ShapeError,
    ValidationError,
)
from codi.masks import extract_subject
from codi.transport import (
    TransportPlan,
    compose_features,
    cost_matrix,
    saliency_scores,
    solve_ot,
    transport_features,
)
from oracles import convex_hull_member, min_cost_flow_ssp


def test_cost_matrix_cosine_geometry():
    s_id = np.array([[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0]])
    s_n = np.array([[2.0, 0.0], [0.0, -1.0]])
    C = cost_matrix(s_id, s_n)
    np.testing.assert_allclose(C, [[0.0, 1.0], [1.0, 2.0], [2.0, 1.0]], atol=1e-12)


def test_cost_matrix_clips_rounding_spill():
    v = np.array([[0.1, 0.2, 0.3, 0.4]])
    C = cost_matrix(v, 3.0 * v)
    assert C.shape == (1, 1)
    assert C[0, 0] == 0.0  # parallel rows, any negative rounding clipped


def test_cost_matrix_rejects_zero_norm_rows():
    with pytest.raises(ValidationError):
        cost_matrix(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))


def test_solve_ot_pinned_two_by_two():
    # Frozen by hand: moving mass off the diagonal costs 2 per unit, so
    # the plan keeps min(0.4, 0.3) at (0,0) and the objective is
    # 2 * 0.1 = 0.2 for the forced spill onto (0,1).
    plan = solve_ot([0.4, 0.6], [0.3, 0.7], [[0.0, 2.0], [2.0, 0.0]])
    np.testing.assert_allclose(plan.matrix, [[0.3, 0.1], [0.0, 0.6]], atol=1e-12)
    assert abs(plan.objective - 0.2) < 1e-12


def test_solve_ot_single_cell():
    plan = solve_ot([1.0], [1.0], [[0.3]])
    np.testing.assert_allclose(plan.matrix, [[1.0]])
    assert abs(plan.objective - 0.3) < 1e-15


def test_solve_ot_degenerate_uniform_ties():
    # Equal masses and a symmetric cost force degenerate pivots; the
    # perturbation must still land on the zero-cost diagonal.
    plan = solve_ot([0.5, 0.5], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(plan.matrix, [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)
    assert plan.objective < 1e-12


def test_solve_ot_marginals_and_support():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        a = rng.random(m) + 0.05
        a /= a.sum()
        b = rng.random(n) + 0.05
        b /= b.sum()
        C = rng.random((m, n)) * 2.0
        plan = solve_ot(a, b, C)
        assert (plan.matrix >= 0).all()
        assert np.abs(plan.matrix.sum(axis=1) - a).max() < 1e-10
        assert np.abs(plan.matrix.sum(axis=0) - b).max() < 1e-10
        assert (plan.matrix > 0).sum() <= m + n - 1


def test_solve_ot_matches_flow_oracle_sample():
    rng = np.random.default_rng(17)
    for _ in range(40):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(2, 5))
        # balanced masses on a 1e-6 grid, every supply strictly positive
        a_units = rng.multinomial(10**6, np.ones(m) / m) + 1
        b_units = rng.multinomial(int(a_units.sum()), np.ones(n) / n)
        C = np.round(rng.random((m, n)) * 2.0, 9)
        scale = float(a_units.sum())
        a = a_units / scale
        b = b_units / scale
        plan = solve_ot(a, b, C)
        expected = min_cost_flow_ssp(a_units, b_units, C) / scale
        assert abs(plan.objective - expected) < 1e-9


def test_solve_ot_rejects_bad_inputs():
    with pytest.raises(InfeasibleMassesError):
        solve_ot([0.4, 0.4], [0.5, 0.5], np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        solve_ot([0.5, 0.5], [1.0], np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        solve_ot([1.2, -0.2], [0.5, 0.5], np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        solve_ot([0.5, 0.5], [0.5, 0.5], np.array([[0.0, np.nan], [0.0, 0.0]]))


def test_transport_features_literal_is_plain_matmul():
    T = np.array([[0.25, 0.25], [0.0, 0.5]])
    S = np.array([[2.0, 0.0], [0.0, 4.0]])
    out = transport_features(T, S, mode="literal")
    np.testing.assert_allclose(out, T.T @ S)


def test_transport_features_barycentric_weights_are_convex():
    rng = np.random.default_rng(23)
    a = rng.random(5)
    a /= a.sum()
    b = rng.random(4)
    b /= b.sum()
    C = rng.random((5, 4))
    plan = solve_ot(a, b, C)
    weights = plan.matrix / plan.matrix.sum(axis=0, keepdims=True)
    col_sums = weights.sum(axis=0)
    assert np.abs(col_sums - 1.0).max() < 1e-9
    S = rng.standard_normal((5, 3))
    out = transport_features(plan, S)
    for j in range(4):
        assert convex_hull_member(out[j], S)


def test_transport_features_permutation_plan_is_bit_exact():
    rng = np.random.default_rng(31)
    perm = np.array([2, 0, 3, 1])
    P = np.zeros((4, 4))
    P[np.arange(4), perm] = 1.0
    S = rng.standard_normal((4, 6))
    for mode in ("literal", "barycentric"):
        out = transport_features(P, S, mode=mode)
        # column j of P selects source row i with P[i, j] = 1
        expected = S[np.argmax(P, axis=0)]
        assert np.array_equal(out, expected)


def test_transport_features_rejects_zero_columns_in_barycentric():
    T = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValidationError):
        transport_features(T, np.ones((2, 2)), mode="barycentric")
    with pytest.raises(ParameterError):
        transport_features(T, np.ones((2, 2)), mode="nearest")


def test_compose_features_inverts_extract():
    rng = np.random.default_rng(7)
    feats = rng.standard_normal((6, 3))
    mask = np.array([True, False, True, False, False, True])
    subject = extract_subject(feats, mask)
    out = compose_features(np.zeros_like(feats), mask, subject)
    np.testing.assert_array_equal(out[mask], subject)
    assert (out[~mask] == 0).all()
    with pytest.raises(ShapeError):
        compose_features(feats, mask, subject[:2])


def test_saliency_scores_sum_masses_weighted_by_similarity():
    T1 = np.array([[0.5, 0.0], [0.0, 0.5]])
    C1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    T2 = np.array([[0.25, 0.25], [0.25, 0.25]])
    C2 = np.array([[1.0, 1.0], [1.0, 1.0]])
    scores = saliency_scores([T1, T2], [C1, C2])
    # image 1 contributes 0.5 per token (zero cost on its mass), image 2
    # contributes 0 (cost exactly 1 everywhere)
    np.testing.assert_allclose(scores, [0.5, 0.5], atol=1e-15)
    with pytest.raises(ShapeError):
        saliency_scores([T1], [C1[:1]])


def test_plan_dataclass_carries_objective():
    plan = solve_ot([0.5, 0.5], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    assert isinstance(plan, TransportPlan)
    assert plan.matrix.shape == (2, 2)
    assert plan.objective == pytest.approx(np.sum(plan.matrix * [[0.0, 1.0], [1.0, 0.0]]))
