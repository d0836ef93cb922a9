"""Deterministic synthetic fixtures.

Every generator is keyed by (seed, kind) through a counter-based
stream, so the same seed always produces the same bytes and different
kinds never share randomness. Attention fixtures plant a contiguous
high-saliency block so mask extraction has a real subject to find.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import jsonio
from .errors import ParameterError
from .tensor_io import write_tensor

# Counter word 0 tags the stream kind; the pipeline's denoiser streams
# use counter [0, 0, 0, step], so these never collide with it.
_KIND_TAGS = {"features": 1, "attention": 2, "keypoints": 3}


def _rng(seed: int, kind: str) -> np.random.Generator:
    if seed < 0:
        raise ParameterError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(
        np.random.Philox(key=seed, counter=[_KIND_TAGS[kind], 0, 0, 0])
    )


def synth_features(seed: int, tokens: int = 36, dim: int = 8) -> np.ndarray:
    """Standard normal feature rows, float32, shape (tokens, dim)."""
    if tokens < 1 or dim < 1:
        raise ParameterError("tokens and dim must be positive")
    rng = _rng(seed, "features")
    return rng.standard_normal((tokens, dim)).astype(np.float32)


def synth_attention(
    seed: int, layers: int = 4, tokens: int = 36, positions: int = 6
) -> np.ndarray:
    """Attention stack (layers, tokens, positions) with a planted subject.

    A contiguous token block (roughly a third of the map, placed by the
    seed) attends strongly; the rest is low-level noise. Averaging over
    layers and positions therefore yields a bimodal saliency map that a
    histogram threshold separates cleanly.
    """
    if layers < 1 or tokens < 1 or positions < 1:
        raise ParameterError("layers, tokens, and positions must be positive")
    rng = _rng(seed, "attention")
    base = 0.05 + 0.02 * rng.random((layers, tokens, positions))
    span = max(1, tokens // 3)
    start = int(rng.integers(0, tokens - span + 1))
    bump = 0.8 + 0.2 * rng.random((layers, span, positions))
    base[:, start : start + span, :] += bump
    return base.astype(np.float32)


def synth_keypoints(seed: int, images: int = 5, joints: int = 17) -> dict:
    """Keypoint document for one image set, ready for JSON dumping.

    Positions stay inside [0.05, 0.95]; confidences span [0.5, 1.0] so
    sweeps over the usual thresholds keep most joints but not all.
    """
    if images < 2 or joints < 3:
        raise ParameterError("need at least 2 images and 3 joints")
    rng = _rng(seed, "keypoints")
    out = []
    for i in range(images):
        pts = 0.05 + 0.9 * rng.random((joints, 2))
        conf = 0.5 + 0.5 * rng.random(joints)
        kps = [[float(x), float(y), float(c)] for (x, y), c in zip(pts, conf)]
        out.append({"id": f"img{i:03d}", "keypoints": kps})
    return {"images": out}


def write_fixture(kind: str, seed: int, path: str | Path, **dims) -> None:
    """Generate one fixture file; tensors as CFT1, keypoints as JSON."""
    if kind == "features":
        write_tensor(synth_features(seed, **dims), path)
    elif kind == "attention":
        write_tensor(synth_attention(seed, **dims), path)
    elif kind == "keypoints":
        jsonio.dump(synth_keypoints(seed, **dims), path)
    else:
        raise ParameterError(f"unknown fixture kind {kind!r}")
