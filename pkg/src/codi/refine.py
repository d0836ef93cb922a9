"""Saliency-filtered cross-image attention.

After identity transfer stops, each target keeps borrowing appearance
from the reference through attention: target queries attend over their
own keys concatenated with the reference's subject keys, but only the
reference tokens whose transport saliency landed in the top alpha
fraction stay visible. Dropping the rest suppresses background bleed
while the renormalization keeps each attention row a distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError


@dataclass(frozen=True)
class AttentionBundle:
    """One target's attention inputs plus the reference subject stream.

    ``q``, ``k_self``, ``v_self`` come from the target image (k_self and
    v_self row-aligned); ``k_ref``, ``v_ref`` are the reference's subject
    token keys and values (also row-aligned). All share the model width.
    """

    q: np.ndarray
    k_self: np.ndarray
    v_self: np.ndarray
    k_ref: np.ndarray
    v_ref: np.ndarray

    def __post_init__(self):
        arrays = {
            "q": self.q,
            "k_self": self.k_self,
            "v_self": self.v_self,
            "k_ref": self.k_ref,
            "v_ref": self.v_ref,
        }
        width = None
        for name, arr in arrays.items():
            a = np.asarray(arr, dtype=np.float64)
            if a.ndim != 2 or a.shape[0] < 1:
                raise ShapeError(f"{name} must be rank 2 with at least one row")
            if not np.isfinite(a).all():
                raise ValidationError(f"{name} contains NaN or Inf")
            if width is None:
                width = a.shape[1]
            elif a.shape[1] != width:
                raise ShapeError(f"{name} width {a.shape[1]} != {width}")
            object.__setattr__(self, name, a)
        if self.k_self.shape[0] != self.v_self.shape[0]:
            raise ShapeError("k_self and v_self must have the same number of rows")
        if self.k_ref.shape[0] != self.v_ref.shape[0]:
            raise ShapeError("k_ref and v_ref must have the same number of rows")


def select_top_alpha(scores: np.ndarray, alpha: float) -> np.ndarray:
    """Indices of the top ceil(alpha * len) scores, ascending.

    At least one index is always kept. Ties at the cut boundary resolve
    toward the lower index, so the selection is deterministic.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ShapeError("cannot select from an empty score vector")
    if not np.isfinite(s).all():
        raise ValidationError("scores contain NaN or Inf")
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"alpha must be in (0, 1], got {alpha}")
    k = max(1, math.ceil(alpha * s.size))
    # Stable sort on negated scores: equal scores keep index order.
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:k])


def cross_image_scores(bundle: AttentionBundle) -> np.ndarray:
    """Softmax attention of q over [k_self ; k_ref], shape (q_rows, total_keys).

    Columns 0..k_self_rows-1 are the target's own keys; reference subject
    keys follow. Logits are scaled by 1/sqrt(width) and the softmax is
    shift-stabilized per row.
    """
    keys = np.concatenate([bundle.k_self, bundle.k_ref], axis=0)
    logits = (bundle.q @ keys.T) / math.sqrt(bundle.q.shape[1])
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def filter_and_renormalize(
    attention: np.ndarray,
    selected: np.ndarray,
    self_keys: int,
    literal: bool = False,
) -> np.ndarray:
    """Zero non-selected reference columns and renormalize each row.

    ``selected`` holds reference-local indices (0 = first reference
    column, i.e. absolute column ``self_keys``). By default rows are
    renormalized over every retained column, self and selected reference
    alike, so each row stays a distribution. ``literal=True`` instead
    divides the whole row by the mass remaining on the selected
    reference columns only, reproducing the zero-then-rescale form
    exactly; its rows do not generally sum to 1.

    Selecting every reference column is a no-op and returns the input
    unchanged (bit for bit).
    """
    A = np.asarray(attention, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("attention must be rank 2")
    if not 0 <= self_keys <= A.shape[1]:
        raise ShapeError(f"self_keys {self_keys} outside 0..{A.shape[1]}")
    ref_cols = A.shape[1] - self_keys
    sel = np.unique(np.asarray(selected, dtype=np.int64).ravel())
    if sel.size == 0:
        raise ValidationError("selection keeps no reference column")
    if sel.min() < 0 or sel.max() >= ref_cols:
        raise ShapeError(f"selected index outside 0..{ref_cols - 1}")
    if sel.size == ref_cols:
        return A.copy()

    keep = np.zeros(A.shape[1], dtype=bool)
    keep[:self_keys] = True
    keep[self_keys + sel] = True
    filtered = np.where(keep[None, :], A, 0.0)
    if literal:
        denom = A[:, self_keys + sel].sum(axis=1)
    else:
        denom = filtered.sum(axis=1)
    if (denom <= 0).any():
        raise ValidationError("attention row lost all mass under the selection")
    return filtered / denom[:, None]


def refine_attention(
    bundle: AttentionBundle,
    selected: np.ndarray,
    literal: bool = False,
) -> np.ndarray:
    """Attend over [v_self ; v_ref] with the filtered attention rows.

    With every reference index selected this reduces to plain
    concatenated attention. Output shape is (q_rows, width).
    """
    A = cross_image_scores(bundle)
    A = filter_and_renormalize(A, selected, bundle.k_self.shape[0], literal=literal)
    values = np.concatenate([bundle.v_self, bundle.v_ref], axis=0)
    return A @ values
