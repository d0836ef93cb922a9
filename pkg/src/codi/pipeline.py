"""Two-pass generation pipeline over a toy deterministic denoiser.

The real mechanism lives inside a diffusion model; here a stand-in
update (a fixed orthogonal mix plus a small shift per step, shared by
every image) exercises the same control flow end to end with exact
reproducibility:

pass 1, step 0: subject masks, transport masses, cost matrices, and
optimal plans are computed once from the harvested inputs and frozen.

pass 2, steps 1..total_steps: identity transfer (IT) runs while
t <= t_switch, moving the reference's evolving subject rows onto each
target through the frozen plan; afterwards identity refinement (IR)
lets each target attend over its own tokens plus the reference's
current subject tokens, filtered to the top-alpha transport saliency.
The reference itself always evolves vanilla.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError
from .masks import average_attention, extract_subject, importance_weights, otsu_threshold
from .refine import AttentionBundle, refine_attention, select_top_alpha
from .tensor_io import flatten_spatial
from .transport import (
    TransportPlan,
    compose_features,
    cost_matrix,
    saliency_scores,
    solve_ot,
    transport_features,
)

_MODES = ("barycentric", "literal")
_RENORMS = ("retained", "selected")


@dataclass(frozen=True)
class PipelineConfig:
    """Run parameters; defaults follow the reference schedule."""

    total_steps: int = 50
    t_switch: int = 10
    alpha: float = 0.5
    seed: int = 0
    transport_mode: str = "barycentric"
    ir_renorm: str = "retained"

    def __post_init__(self):
        if self.total_steps < 1:
            raise ParameterError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.t_switch <= self.total_steps:
            raise ParameterError(
                f"t_switch must be in 0..total_steps, got {self.t_switch}"
            )
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.seed < 0:
            raise ParameterError(f"seed must be nonnegative, got {self.seed}")
        if self.transport_mode not in _MODES:
            raise ParameterError(f"transport_mode must be one of {_MODES}")
        if self.ir_renorm not in _RENORMS:
            raise ParameterError(f"ir_renorm must be one of {_RENORMS}")


_CONFIG_TYPES = {
    "total_steps": int,
    "t_switch": int,
    "alpha": float,
    "seed": int,
    "transport_mode": str,
    "ir_renorm": str,
}


def parse_config(text: str) -> PipelineConfig:
    """Parse a flat key=value config; '#' starts a comment line.

    Unknown keys and unparseable values are parameter errors, so typos
    fail loudly instead of silently running defaults.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno} is not key=value: {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_TYPES:
            raise ParameterError(f"unknown config key {key!r} on line {lineno}")
        try:
            values[key] = _CONFIG_TYPES[key](val)
        except ValueError as exc:
            raise ParameterError(f"bad value for {key!r} on line {lineno}: {val!r}") from exc
    return PipelineConfig(**values)


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def _step_transform(width: int, step: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (orthogonal mix, shift) for one denoiser step.

    The stream is keyed by (seed, step) through a counter-based
    generator, so any step can be materialized independently and every
    image sees the identical transform at the same step.
    """
    bits = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, step]))
    g = bits.standard_normal((width, width))
    q, r = np.linalg.qr(g)
    # Sign fix makes the decomposition unique (diag(r) > 0), so the
    # transform does not depend on LAPACK's sign conventions.
    q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
    shift = 0.05 * bits.standard_normal(width)
    return q, shift


def toy_denoise_step(x: np.ndarray, step: int, seed: int) -> np.ndarray:
    """One denoiser update: x @ Q_step + shift_step, rows independent."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"features must be rank 2, got rank {arr.ndim}")
    if step < 0:
        raise ParameterError(f"step must be nonnegative, got {step}")
    if seed < 0:
        raise ParameterError(f"seed must be nonnegative, got {seed}")
    q, shift = _step_transform(arr.shape[1], step, seed)
    return arr @ q + shift


@dataclass
class RunArtifacts:
    """Everything a run produces, in memory.

    ``reference_steps[t]`` and ``target_steps[n][t]`` hold the feature
    state after step t, with index 0 being the harvested input. The
    plans, masks, and selection are the frozen step-0 products.
    """

    config: PipelineConfig
    stage_log: list = field(default_factory=list)
    reference_mask: np.ndarray = None
    reference_threshold: float = 0.0
    reference_weights: np.ndarray = None
    reference_saliency: np.ndarray = None
    target_masks: list = field(default_factory=list)
    target_thresholds: list = field(default_factory=list)
    target_weights: list = field(default_factory=list)
    target_saliencies: list = field(default_factory=list)
    cost_matrices: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    ot_saliency: np.ndarray = None
    selected: np.ndarray = None
    reference_steps: list = field(default_factory=list)
    target_steps: list = field(default_factory=list)


def _prepare_features(features: np.ndarray, label: str) -> np.ndarray:
    feats = flatten_spatial(np.asarray(features, dtype=np.float64))
    if not np.isfinite(feats).all():
        raise ValidationError(f"{label} features contain NaN or Inf")
    return feats


def run_pipeline(
    config: PipelineConfig,
    reference_features: np.ndarray,
    reference_attention: np.ndarray,
    targets: list[tuple[np.ndarray, np.ndarray]],
) -> RunArtifacts:
    """Execute the two-pass schedule and return all artifacts.

    ``targets`` is a list of (features, attention stack) pairs. Feature
    maps may be (tokens, d) or (H, W, d); every image must share the
    feature width d. Targets are processed independently, so reordering
    them reorders the outputs and changes nothing else.
    """
    if len(targets) == 0:
        raise ShapeError("pipeline needs at least one target image")
    ref = _prepare_features(reference_features, "reference")
    width = ref.shape[1]
    art = RunArtifacts(config=config)

    sal = average_attention(reference_attention)
    if sal.size != ref.shape[0]:
        raise ShapeError(
            f"reference attention covers {sal.size} tokens, features have {ref.shape[0]}"
        )
    art.reference_saliency = sal
    art.reference_threshold, art.reference_mask = otsu_threshold(sal)
    art.reference_weights = importance_weights(sal, art.reference_mask)
    s_id0 = extract_subject(ref, art.reference_mask)

    states = []
    for n, (feats, attn) in enumerate(targets):
        x = _prepare_features(feats, f"target {n}")
        if x.shape[1] != width:
            raise ShapeError(f"target {n} width {x.shape[1]} != reference width {width}")
        t_sal = average_attention(attn)
        if t_sal.size != x.shape[0]:
            raise ShapeError(
                f"target {n} attention covers {t_sal.size} tokens, features have {x.shape[0]}"
            )
        thr, mask = otsu_threshold(t_sal)
        b = importance_weights(t_sal, mask)
        C = cost_matrix(s_id0, extract_subject(x, mask))
        plan = solve_ot(art.reference_weights, b, C)
        art.target_saliencies.append(t_sal)
        art.target_thresholds.append(thr)
        art.target_masks.append(mask)
        art.target_weights.append(b)
        art.cost_matrices.append(C)
        art.plans.append(plan)
        states.append(x)

    art.ot_saliency = saliency_scores(art.plans, art.cost_matrices)
    art.selected = select_top_alpha(art.ot_saliency, config.alpha)

    x_ref = ref.copy()
    art.reference_steps.append(x_ref.copy())
    art.target_steps = [[x.copy()] for x in states]

    literal_renorm = config.ir_renorm == "selected"
    for t in range(1, config.total_steps + 1):
        stage = "IT" if t <= config.t_switch else "IR"
        if stage == "IT":
            s_id = extract_subject(x_ref, art.reference_mask)
            for n in range(len(states)):
                moved = transport_features(art.plans[n], s_id, mode=config.transport_mode)
                states[n] = compose_features(states[n], art.target_masks[n], moved)
        else:
            k_ref = extract_subject(x_ref, art.reference_mask)
            for n in range(len(states)):
                bundle = AttentionBundle(
                    q=states[n],
                    k_self=states[n],
                    v_self=states[n],
                    k_ref=k_ref,
                    v_ref=k_ref,
                )
                states[n] = refine_attention(bundle, art.selected, literal=literal_renorm)
        x_ref = toy_denoise_step(x_ref, t - 1, config.seed)
        for n in range(len(states)):
            states[n] = toy_denoise_step(states[n], t - 1, config.seed)
        art.stage_log.append({"step": t, "stage": stage})
        art.reference_steps.append(x_ref.copy())
        for n in range(len(states)):
            art.target_steps[n].append(states[n].copy())
    return art
