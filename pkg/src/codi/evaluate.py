"""Pose diversity and identity consistency metrics.

Pose difference between two images of the same subject is measured
after removing the rigid part: shared confident keypoints are centered
and scale-normalized, the best orthogonal alignment comes from an SVD,
and what remains is genuine articulation. Scores aggregate over all
unordered pairs within an image set, then over sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateShapeError,
    FormatError,
    InsufficientKeypointsError,
    NoValidPairsError,
    ParameterError,
    ShapeError,
    ValidationError,
)

MIN_COMMON_KEYPOINTS = 3
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class KeypointSet:
    """Detected joints for one image: (H, 2) positions, (H,) confidences.

    Positions are normalized image coordinates in [0, 1]; confidences
    live in [0, 1] as well.
    """

    points: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        conf = np.asarray(self.confidences, dtype=np.float64).ravel()
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeError(f"points must be (H, 2), got {pts.shape}")
        if conf.size != pts.shape[0]:
            raise ShapeError(f"{conf.size} confidences for {pts.shape[0]} points")
        if not (np.isfinite(pts).all() and np.isfinite(conf).all()):
            raise ValidationError("keypoints contain NaN or Inf")
        if (conf < 0).any() or (conf > 1).any():
            raise ValidationError("confidences must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "confidences", conf)


@dataclass(frozen=True)
class AlignmentResult:
    """Optimal similarity alignment of one point set onto another.

    ``aligned`` holds the source points after rotation and scaling in
    the shared centered, unit-norm frame; ``target_normalized`` is the
    target in that same frame. ``common_indices`` records which joints
    survived confidence filtering when alignment came from keypoint
    sets (None when raw point arrays were aligned directly).
    """

    rotation: np.ndarray
    scale: float
    aligned: np.ndarray
    target_normalized: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray
    common_indices: np.ndarray | None = None


def filter_common(kp_i: KeypointSet, kp_j: KeypointSet, tau: float) -> np.ndarray:
    """Joint indices confident in both images (>= tau in each).

    Both sets must enumerate the same joints, so index k refers to the
    same body part in each.
    """
    if not 0.0 <= tau <= 1.0:
        raise ParameterError(f"tau must be in [0, 1], got {tau}")
    if kp_i.points.shape[0] != kp_j.points.shape[0]:
        raise ShapeError("keypoint sets enumerate different joint counts")
    return np.flatnonzero((kp_i.confidences >= tau) & (kp_j.confidences >= tau))


def procrustes_align(
    p_i: np.ndarray,
    p_j: np.ndarray,
    proper_rotation: bool = False,
) -> AlignmentResult:
    """Best similarity transform from p_i onto p_j in the normalized frame.

    Both clouds are centered and scaled to unit Frobenius norm; with
    M = p̄_i^T p̄_j and U S Vh = svd(M), the orthogonal aligner is
    R = U @ Vh and the scale is the sum of singular values. Reflections
    are legal aligners by default; ``proper_rotation=True`` restricts to
    det +1 by flipping the smallest singular direction when needed, at
    the cost of a larger residual.
    """
    pi = np.asarray(p_i, dtype=np.float64)
    pj = np.asarray(p_j, dtype=np.float64)
    if pi.ndim != 2 or pj.ndim != 2 or pi.shape[1] != 2 or pj.shape[1] != 2:
        raise ShapeError("point arrays must be (H, 2)")
    if pi.shape[0] != pj.shape[0]:
        raise ShapeError(f"point counts disagree: {pi.shape[0]} vs {pj.shape[0]}")
    if pi.shape[0] < MIN_COMMON_KEYPOINTS:
        raise InsufficientKeypointsError(
            f"alignment needs >= {MIN_COMMON_KEYPOINTS} points, got {pi.shape[0]}"
        )
    mu_i = pi.mean(axis=0)
    mu_j = pj.mean(axis=0)
    ci = pi - mu_i
    cj = pj - mu_j
    ni = np.linalg.norm(ci)
    nj = np.linalg.norm(cj)
    if ni < _NORM_FLOOR or nj < _NORM_FLOOR:
        raise DegenerateShapeError("all points coincide; alignment is undefined")
    bi = ci / ni
    bj = cj / nj
    u, s, vh = np.linalg.svd(bi.T @ bj)
    rotation = u @ vh
    if proper_rotation and np.linalg.det(rotation) < 0:
        # Flip the least-significant singular direction to land on SO(2).
        flip = np.ones_like(s)
        flip[-1] = -1.0
        rotation = (u * flip) @ vh
        scale = float((s * flip).sum())
    else:
        scale = float(s.sum())
    return AlignmentResult(
        rotation=rotation,
        scale=scale,
        aligned=scale * (bi @ rotation),
        target_normalized=bj,
        source_mean=mu_i,
        target_mean=mu_j,
    )


def align_keypoints(
    kp_i: KeypointSet,
    kp_j: KeypointSet,
    tau: float = 0.7,
    proper_rotation: bool = False,
) -> AlignmentResult:
    """Confidence-filter two keypoint sets and Procrustes-align them.

    Raises InsufficientKeypointsError when fewer than three joints are
    confident in both images; set evaluation treats that as a skipped
    pair. The result records which joints survived filtering.
    """
    idx = filter_common(kp_i, kp_j, tau)
    if idx.size < MIN_COMMON_KEYPOINTS:
        raise InsufficientKeypointsError(
            f"only {idx.size} joints confident in both images at tau={tau}"
        )
    res = procrustes_align(
        kp_i.points[idx], kp_j.points[idx], proper_rotation=proper_rotation
    )
    return replace(res, common_indices=idx)


def pose_distance(
    kp_i: KeypointSet,
    kp_j: KeypointSet,
    tau: float = 0.7,
    literal_frame: bool = False,
    proper_rotation: bool = False,
) -> float:
    """Mean joint displacement left after optimal similarity alignment.

    Joints confident in both images are aligned; the score is the mean
    Euclidean distance between aligned source joints and the target. By
    default both sides are compared in the centered unit-norm frame, so
    the score is a pure shape difference. ``literal_frame=True`` instead
    re-anchors the aligned source at the target's raw centroid and
    compares against the raw target points, which folds the target's
    own scale back into the number.
    """
    res = align_keypoints(kp_i, kp_j, tau=tau, proper_rotation=proper_rotation)
    if literal_frame:
        mapped = res.aligned + res.target_mean
        target = kp_j.points[res.common_indices]
    else:
        mapped = res.aligned
        target = res.target_normalized
    return float(np.linalg.norm(mapped - target, axis=1).mean())


@dataclass(frozen=True)
class PairwiseResult:
    """Average of a pair metric over one collection."""

    score: float
    pairs_evaluated: int
    pairs_skipped: int


def pairwise_average(items: Sequence, metric: Callable) -> PairwiseResult:
    """Mean of ``metric`` over all unordered item pairs, in index order.

    Pairs where the metric raises InsufficientKeypointsError are
    skipped and the divisor shrinks accordingly. If every pair is
    skipped there is nothing to average and NoValidPairsError is
    raised.
    """
    n = len(items)
    if n < 2:
        raise ShapeError(f"pairwise average needs >= 2 items, got {n}")
    values = []
    skipped = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            try:
                values.append(metric(items[i], items[j]))
            except InsufficientKeypointsError:
                skipped += 1
    if not values:
        raise NoValidPairsError(f"all {skipped} pairs were skipped")
    return PairwiseResult(
        score=float(np.mean(values)),
        pairs_evaluated=len(values),
        pairs_skipped=skipped,
    )


def pose_set_score(
    keypoint_sets: Sequence[KeypointSet],
    tau: float = 0.7,
    literal_frame: bool = False,
    proper_rotation: bool = False,
) -> PairwiseResult:
    """Pose diversity of one image set: pairwise mean pose distance.

    pose_distance is directional (the scale applies to the source
    cloud), so each unordered pair scores the mean of both directions;
    that keeps the set score invariant under reordering the images.
    """

    def metric(a: KeypointSet, b: KeypointSet) -> float:
        forward = pose_distance(
            a, b, tau=tau, literal_frame=literal_frame, proper_rotation=proper_rotation
        )
        backward = pose_distance(
            b, a, tau=tau, literal_frame=literal_frame, proper_rotation=proper_rotation
        )
        return 0.5 * (forward + backward)

    return pairwise_average(keypoint_sets, metric)


def dataset_average(scores: Sequence[float]) -> float:
    """Mean of per-set scores; the dataset-level number."""
    if len(scores) == 0:
        raise ShapeError("dataset average needs at least one set score")
    return float(np.mean(np.asarray(scores, dtype=np.float64)))


def embedding_consistency(embeddings: np.ndarray, kind: str = "similarity") -> float:
    """Pairwise cosine statistic over identity embeddings.

    ``similarity`` averages cos(e_i, e_j) over unordered pairs (higher
    is more consistent); ``distance`` averages 1 - cos. Zero-norm rows
    have no direction and are rejected.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 2:
        raise ShapeError("embeddings must be rank 2 with at least two rows")
    if not np.isfinite(E).all():
        raise ValidationError("embeddings contain NaN or Inf")
    if kind not in ("similarity", "distance"):
        raise ParameterError(f"kind must be 'similarity' or 'distance', got {kind!r}")
    norms = np.linalg.norm(E, axis=1)
    if (norms == 0).any():
        raise ValidationError("zero-norm embedding row")
    unit = E / norms[:, None]
    cos = unit @ unit.T
    iu = np.triu_indices(E.shape[0], k=1)
    mean_cos = float(cos[iu].mean())
    return mean_cos if kind == "similarity" else 1.0 - mean_cos


def tau_sweep(
    image_sets: Sequence[Sequence[KeypointSet]],
    taus: Sequence[float],
    literal_frame: bool = False,
    proper_rotation: bool = False,
) -> list[tuple[float, float]]:
    """Dataset pose diversity at each confidence threshold.

    Returns (tau, overall score) pairs in the given tau order. Errors
    from sets with no valid pairs propagate: a tau that filters a set to
    nothing is a data problem the caller should see, not a silent hole
    in the sweep.
    """
    out = []
    for tau in taus:
        per_set = [
            pose_set_score(
                sets, tau=tau, literal_frame=literal_frame, proper_rotation=proper_rotation
            ).score
            for sets in image_sets
        ]
        out.append((float(tau), dataset_average(per_set)))
    return out


def load_keypoint_file(path: str | Path) -> list[tuple[str, list[KeypointSet]]]:
    """Read keypoint JSON into (set id, keypoint sets) groups.

    Two layouts are accepted. The flat form describes one image set:

        {"images": [{"id": str, "keypoints": [[x, y, conf], ...]}, ...]}

    and is returned as a single group with id "default". The grouped
    form wraps several such sets:

        {"sets": [{"id": str, "images": [...]}, ...]}
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    if "sets" in doc:
        groups = doc["sets"]
        if not isinstance(groups, list) or not groups:
            raise ValidationError(f"{path}: 'sets' must be a non-empty list")
        return [(str(g.get("id", i)), _parse_images(g, path)) for i, g in enumerate(groups)]
    return [("default", _parse_images(doc, path))]


def _parse_images(doc: dict, path) -> list[KeypointSet]:
    images = doc.get("images")
    if not isinstance(images, list) or not images:
        raise ValidationError(f"{path}: 'images' must be a non-empty list")
    sets = []
    for entry in images:
        kps = entry.get("keypoints")
        if not isinstance(kps, list):
            raise ValidationError(f"{path}: image entry without 'keypoints'")
        arr = np.asarray(kps, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValidationError(f"{path}: keypoints must be [x, y, conf] triples")
        if ((arr[:, :2] < 0) | (arr[:, :2] > 1)).any():
            raise ValidationError(f"{path}: keypoint coordinates must lie in [0, 1]")
        sets.append(KeypointSet(points=arr[:, :2], confidences=arr[:, 2]))
    return sets
