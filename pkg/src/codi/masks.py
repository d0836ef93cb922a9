"""Subject-mask extraction from cross-attention.

The subject region of an image is recovered from the attention its
tokens pay to the subject text token: attention maps are averaged over
layers and text positions into a per-token saliency map, a global
threshold is chosen by maximizing between-class variance over a 256-bin
histogram, and tokens above the threshold form the binary subject mask.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError

HIST_BINS = 256


def average_attention(stack: np.ndarray) -> np.ndarray:
    """Average an (L, tokens, S) attention stack into per-token saliency.

    ``L`` indexes layers and ``S`` the attended text positions; both are
    averaged away. A list of equally shaped (tokens, S) arrays is also
    accepted. All values must be finite.
    """
    if isinstance(stack, (list, tuple)):
        shapes = {np.asarray(layer).shape for layer in stack}
        if len(shapes) != 1:
            raise ShapeError(f"attention layers disagree on shape: {sorted(shapes)}")
        stack = np.stack([np.asarray(layer, dtype=np.float64) for layer in stack])
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"attention stack must be rank 3 (L, tokens, S), got rank {arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValidationError("attention stack contains NaN or Inf")
    return arr.mean(axis=(0, 2))


def _between_class_variance(hist: np.ndarray) -> np.ndarray:
    """Between-class variance for every split t (background = bins <= t).

    Written against integer counts so the whole curve is reproducible
    exactly: cumulative counts and index-weighted sums stay integral,
    and the only roundings are the two mean divisions and the final
    product, which any equivalent formulation performs identically.
    """
    idx = np.arange(HIST_BINS, dtype=np.int64)
    c0 = np.cumsum(hist)
    c1 = c0[-1] - c0
    s0 = np.cumsum(hist * idx)
    s1 = s0[-1] - s0
    bcv = np.zeros(HIST_BINS, dtype=np.float64)
    valid = (c0 > 0) & (c1 > 0)
    m0 = s0[valid] / c0[valid]
    m1 = s1[valid] / c1[valid]
    bcv[valid] = (c0[valid] * c1[valid]).astype(np.float64) * (m0 - m1) ** 2
    return bcv


def saliency_histogram(saliency: np.ndarray) -> np.ndarray:
    """256-bin histogram of min-max normalized saliency values.

    Bin b covers [b/256, (b+1)/256) of the normalized range, except the
    last bin which also includes 1.0.
    """
    values = np.asarray(saliency, dtype=np.float64).ravel()
    lo, hi = values.min(), values.max()
    norm = (values - lo) / (hi - lo)
    bins = np.minimum((norm * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    return np.bincount(bins, minlength=HIST_BINS)


def otsu_threshold(saliency: np.ndarray) -> tuple[float, np.ndarray]:
    """Split saliency into (threshold, boolean subject mask).

    The split index maximizes between-class variance; ties take the
    lowest index. The returned threshold lives in the original value
    units (the upper edge of the background's last bin mapped back
    through the normalization) and the mask is strictly greater-than,
    so values exactly at the threshold fall to background.

    Degenerate maps are repaired rather than rejected: an all-equal map,
    or one where thresholding would leave no subject token, yields a
    mask of all ones.
    """
    values = np.asarray(saliency, dtype=np.float64).ravel()
    if values.size == 0:
        raise ShapeError("saliency map is empty")
    if not np.isfinite(values).all():
        raise ValidationError("saliency map contains NaN or Inf")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return lo, np.ones(values.size, dtype=bool)
    hist = saliency_histogram(values)
    split = int(np.argmax(_between_class_variance(hist)))
    threshold = lo + (split + 1) / HIST_BINS * (hi - lo)
    mask = values > threshold
    if not mask.any():
        return threshold, np.ones(values.size, dtype=bool)
    return threshold, mask


def extract_subject(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Gather the masked token rows of a (tokens, d) feature matrix.

    Row order is preserved, so position k of the result is the k-th
    True token in mask order. The inverse operation is
    ``compose_features`` in the transport module.
    """
    feats = np.asarray(features)
    m = np.asarray(mask, dtype=bool).ravel()
    if feats.ndim != 2:
        raise ShapeError(f"features must be rank 2 (tokens, d), got rank {feats.ndim}")
    if m.size != feats.shape[0]:
        raise ShapeError(f"mask has {m.size} entries for {feats.shape[0]} tokens")
    return feats[m]


def importance_weights(saliency: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax of the masked saliencies; the transport mass of each token.

    The softmax is shift-stabilized, which leaves the result unchanged
    mathematically. Output is strictly positive and sums to 1 within
    float rounding.
    """
    values = np.asarray(saliency, dtype=np.float64).ravel()
    m = np.asarray(mask, dtype=bool).ravel()
    if values.size != m.size:
        raise ShapeError(f"mask has {m.size} entries for {values.size} saliencies")
    if not m.any():
        raise ValidationError("mask selects no tokens")
    selected = values[m]
    z = np.exp(selected - selected.max())
    return z / z.sum()
