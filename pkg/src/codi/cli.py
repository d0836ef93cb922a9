"""Command-line interface.

Subcommands cover each stage in isolation (mask, ot solve, ot
transport, refine) plus the end-to-end run, evaluation, fixture
synthesis, and run reporting. Every command prints a JSON report to
stdout; tensors travel as CFT1 files.

Exit codes: 0 success, 1 usage or parameter error, 2 unreadable or
malformed input file, 3 validation or numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import jsonio
from .errors import (
    EngineError,
    FormatError,
    NumericError,
    ParameterError,
    ValidationError,
)
from .evaluate import (
    dataset_average,
    embedding_consistency,
    load_keypoint_file,
    pose_set_score,
    tau_sweep,
)
from .masks import average_attention, importance_weights, otsu_threshold
from .pipeline import load_config, run_pipeline
from .refine import AttentionBundle, refine_attention, select_top_alpha
from .tensor_io import read_tensor, write_tensor
from .transport import TransportPlan, solve_ot, transport_features
from .synth import write_fixture

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_INVALID = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; remap to 1."""

    def error(self, message):
        raise ParameterError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="codi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mask", help="extract a subject mask from attention")
    p.add_argument("--attention", required=True, help="CFT1 stack (layers, tokens, positions)")
    p.add_argument("--out-mask", help="CFT1 output, 0/1 per token")
    p.add_argument("--out-weights", help="CFT1 output, softmax masses over masked tokens")
    p.add_argument("--out-saliency", help="CFT1 output, averaged per-token saliency")

    p = sub.add_parser("ot", help="optimal transport operations")
    ot_sub = p.add_subparsers(dest="ot_command", required=True, parser_class=_Parser)
    ps = ot_sub.add_parser("solve", help="solve for an optimal plan")
    ps.add_argument("--masses-a", required=True, help="CFT1 supply masses (reference tokens)")
    ps.add_argument("--masses-b", required=True, help="CFT1 demand masses (target tokens)")
    ps.add_argument("--cost", required=True, help="CFT1 cost matrix, rows = supplies")
    ps.add_argument("--out", required=True, help="CFT1 output plan")
    pt = ot_sub.add_parser("transport", help="apply a plan to features")
    pt.add_argument("--plan", required=True, help="CFT1 transport plan")
    pt.add_argument("--features", required=True, help="CFT1 reference subject rows")
    pt.add_argument("--mode", default="barycentric", help="barycentric or literal")
    pt.add_argument("--out", required=True, help="CFT1 output rows")

    p = sub.add_parser("refine", help="saliency-filtered cross-image attention")
    p.add_argument("--saliency", required=True, help="CFT1 transport saliency per reference token")
    p.add_argument("--alpha", type=float, default=0.5, help="retained fraction, in (0, 1]")
    p.add_argument("--bundle-dir", help="directory with q/k_self/v_self/k_ref/v_ref .cft")
    p.add_argument("--out", help="CFT1 refined output (requires --bundle-dir)")
    p.add_argument(
        "--literal-renorm",
        action="store_true",
        help="renormalize by selected reference mass only",
    )

    p = sub.add_parser("run", help="run the two-pass pipeline")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--inputs", required=True, help="directory with reference/target tensors")
    p.add_argument("--out", required=True, help="artifact output directory")

    p = sub.add_parser("eval", help="evaluation metrics")
    ev_sub = p.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    pp = ev_sub.add_parser("pose", help="pose diversity from keypoints")
    pp.add_argument("--keypoints", required=True, help="keypoint JSON file")
    pp.add_argument("--tau", type=float, default=0.7, help="confidence threshold")
    pp.add_argument("--sweep", help="comma-separated taus; overrides --tau")
    pp.add_argument("--literal-frame", action="store_true",
                    help="compare at the target's raw centroid and scale")
    pp.add_argument("--proper-rotation", action="store_true",
                    help="restrict alignment to det +1 rotations")
    pp.add_argument("--out", help="also write the report to this path")
    pc = ev_sub.add_parser("consistency", help="embedding cosine statistic")
    pc.add_argument("--embeddings", required=True, help="CFT1 rows, one embedding per image")
    pc.add_argument("--kind", default="similarity", help="similarity or distance")

    p = sub.add_parser("synth", help="generate a deterministic fixture")
    p.add_argument("--kind", required=True, help="features, attention, or keypoints")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--tokens", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--positions", type=int)
    p.add_argument("--images", type=int)
    p.add_argument("--joints", type=int)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", help="also write the report to this path")
    return parser


def cmd_mask(args) -> dict:
    stack = read_tensor(args.attention)
    saliency = average_attention(stack)
    threshold, mask = otsu_threshold(saliency)
    weights = importance_weights(saliency, mask)
    report = {
        "threshold": threshold,
        "tokens": int(mask.size),
        "subject_tokens": int(mask.sum()),
    }
    if mask.all():
        report["warning"] = "degenerate saliency; mask covers every token"
    if args.out_mask:
        write_tensor(mask.astype(np.float32), args.out_mask)
    if args.out_weights:
        write_tensor(weights.astype(np.float32), args.out_weights)
    if args.out_saliency:
        write_tensor(saliency.astype(np.float32), args.out_saliency)
    return report


def cmd_ot(args) -> dict:
    if args.ot_command == "solve":
        a = read_tensor(args.masses_a).astype(np.float64)
        b = read_tensor(args.masses_b).astype(np.float64)
        cost = read_tensor(args.cost).astype(np.float64)
        plan = solve_ot(a, b, cost)
        write_tensor(plan.matrix.astype(np.float32), args.out)
        row_residual = float(np.abs(plan.matrix.sum(axis=1) - a).max())
        col_residual = float(np.abs(plan.matrix.sum(axis=0) - b).max())
        return {
            "objective": plan.objective,
            "row_residual": row_residual,
            "col_residual": col_residual,
            "positive_entries": int((plan.matrix > 0).sum()),
        }
    T = read_tensor(args.plan).astype(np.float64)
    feats = read_tensor(args.features).astype(np.float64)
    moved = transport_features(T, feats, mode=args.mode)
    write_tensor(moved.astype(np.float32), args.out)
    return {"rows": int(moved.shape[0]), "width": int(moved.shape[1]), "mode": args.mode}


def cmd_refine(args) -> dict:
    saliency = read_tensor(args.saliency).astype(np.float64).ravel()
    selected = select_top_alpha(saliency, args.alpha)
    report = {
        "alpha": float(args.alpha),
        "selected": [int(i) for i in selected],
        "kept": int(selected.size),
        "of": int(saliency.size),
    }
    if args.bundle_dir is None:
        if args.out:
            raise ParameterError("--out requires --bundle-dir")
        return report
    if args.out is None:
        raise ParameterError("--bundle-dir requires --out")
    bundle_dir = Path(args.bundle_dir)
    names = ("q", "k_self", "v_self", "k_ref", "v_ref")
    tensors = {name: read_tensor(bundle_dir / f"{name}.cft") for name in names}
    if tensors["k_ref"].shape[0] != saliency.size:
        raise ValidationError(
            f"saliency covers {saliency.size} tokens, k_ref has {tensors['k_ref'].shape[0]} rows"
        )
    bundle = AttentionBundle(**{k: v.astype(np.float64) for k, v in tensors.items()})
    out = refine_attention(bundle, selected, literal=args.literal_renorm)
    write_tensor(out.astype(np.float32), args.out)
    report.update({"rows": int(out.shape[0]), "width": int(out.shape[1])})
    return report


def _load_run_inputs(inputs_dir: Path):
    ref = read_tensor(inputs_dir / "reference.cft")
    ref_attn = read_tensor(inputs_dir / "reference_attention.cft")
    targets = []
    paths = sorted(inputs_dir.glob("target_*.cft"))
    for path in paths:
        if path.stem.endswith("_attention"):
            continue
        attn_path = path.with_name(f"{path.stem}_attention.cft")
        targets.append((read_tensor(path), read_tensor(attn_path)))
    if not targets:
        raise FormatError(f"{inputs_dir}: no target_NNN.cft inputs found")
    return ref, ref_attn, targets


def cmd_run(args) -> dict:
    config = load_config(args.config)
    ref, ref_attn, targets = _load_run_inputs(Path(args.inputs))
    art = run_pipeline(config, ref, ref_attn, targets)

    out_dir = Path(args.out)
    steps_dir = out_dir / "steps"
    steps_dir.mkdir(parents=True, exist_ok=True)

    write_tensor(art.reference_mask.astype(np.float32), out_dir / "reference_mask.cft")
    write_tensor(art.reference_weights.astype(np.float32), out_dir / "reference_weights.cft")
    write_tensor(art.reference_saliency.astype(np.float32), out_dir / "reference_saliency.cft")
    write_tensor(art.ot_saliency.astype(np.float32), out_dir / "ot_saliency.cft")
    plans = []
    for n, plan in enumerate(art.plans):
        write_tensor(art.target_masks[n].astype(np.float32), out_dir / f"target_{n:03d}_mask.cft")
        write_tensor(
            art.target_weights[n].astype(np.float32), out_dir / f"target_{n:03d}_weights.cft"
        )
        write_tensor(plan.matrix.astype(np.float32), out_dir / f"target_{n:03d}_plan.cft")
        write_tensor(
            art.cost_matrices[n].astype(np.float32), out_dir / f"target_{n:03d}_cost.cft"
        )
        plans.append({"target": n, "objective": plan.objective})
    for t, state in enumerate(art.reference_steps):
        write_tensor(state.astype(np.float32), steps_dir / f"reference_step_{t:03d}.cft")
    for n, states in enumerate(art.target_steps):
        for t, state in enumerate(states):
            write_tensor(state.astype(np.float32), steps_dir / f"target_{n:03d}_step_{t:03d}.cft")

    jsonio.dump({"steps": art.stage_log}, out_dir / "stage_log.json")
    summary = {
        "config": {
            "total_steps": config.total_steps,
            "t_switch": config.t_switch,
            "alpha": config.alpha,
            "seed": config.seed,
            "transport_mode": config.transport_mode,
            "ir_renorm": config.ir_renorm,
        },
        "targets": len(targets),
        "reference_threshold": art.reference_threshold,
        "target_thresholds": [float(t) for t in art.target_thresholds],
        "selected": [int(i) for i in art.selected],
        "plans": plans,
    }
    jsonio.dump(summary, out_dir / "run_summary.json")
    return summary


def cmd_eval(args) -> dict:
    if args.eval_command == "pose":
        groups = load_keypoint_file(args.keypoints)
        if args.sweep:
            try:
                taus = [float(t) for t in args.sweep.split(",") if t.strip()]
            except ValueError as exc:
                raise ParameterError(f"bad --sweep value: {args.sweep!r}") from exc
            if not taus:
                raise ParameterError("--sweep lists no thresholds")
            points = tau_sweep(
                [sets for _, sets in groups],
                taus,
                literal_frame=args.literal_frame,
                proper_rotation=args.proper_rotation,
            )
            report = {"sweep": [{"tau": t, "overall": s} for t, s in points]}
        else:
            per_set = []
            scores = []
            for set_id, sets in groups:
                result = pose_set_score(
                    sets,
                    tau=args.tau,
                    literal_frame=args.literal_frame,
                    proper_rotation=args.proper_rotation,
                )
                per_set.append(
                    {
                        "id": set_id,
                        "score": result.score,
                        "skipped_pairs": result.pairs_skipped,
                    }
                )
                scores.append(result.score)
            report = {"per_set": per_set, "overall": dataset_average(scores)}
        if args.out:
            jsonio.dump(report, args.out)
        return report
    embeddings = read_tensor(args.embeddings).astype(np.float64)
    score = embedding_consistency(embeddings, kind=args.kind)
    return {"kind": args.kind, "score": score}


def cmd_synth(args) -> dict:
    dims = {}
    for key in ("tokens", "dim", "layers", "positions", "images", "joints"):
        value = getattr(args, key)
        if value is not None:
            dims[key] = value
    write_fixture(args.kind, args.seed, args.out, **dims)
    return {"kind": args.kind, "seed": args.seed, "out": str(args.out)}


def cmd_report(args) -> dict:
    run_dir = Path(args.run_dir)
    stage_log = (run_dir / "stage_log.json").read_text()
    import json as _json

    try:
        log = _json.loads(stage_log)
    except _json.JSONDecodeError as exc:
        raise FormatError(f"stage_log.json is not valid JSON: {exc}") from exc
    steps = log.get("steps", [])
    stages = [entry["stage"] for entry in steps]

    plans = []
    weights_a = read_tensor(run_dir / "reference_weights.cft").astype(np.float64)
    for plan_path in sorted(run_dir.glob("target_*_plan.cft")):
        n = plan_path.stem.split("_")[1]
        T = read_tensor(plan_path).astype(np.float64)
        C = read_tensor(run_dir / f"target_{n}_cost.cft").astype(np.float64)
        b = read_tensor(run_dir / f"target_{n}_weights.cft").astype(np.float64)
        plans.append(
            {
                "target": int(n),
                "objective": float(np.sum(T * C)),
                "row_residual": float(np.abs(T.sum(axis=1) - weights_a).max()),
                "col_residual": float(np.abs(T.sum(axis=0) - b).max()),
                "positive_entries": int((T > 0).sum()),
            }
        )

    norms = {}
    for state_path in sorted((run_dir / "steps").glob("*.cft")):
        arr = read_tensor(state_path).astype(np.float64)
        norms[state_path.stem] = float(np.linalg.norm(arr))

    report = {
        "steps": len(steps),
        "it_steps": stages.count("IT"),
        "ir_steps": stages.count("IR"),
        "stage_log": steps,
        "plans": plans,
        "state_norms": norms,
    }
    if args.out:
        jsonio.dump(report, args.out)
    return report


_COMMANDS = {
    "mask": cmd_mask,
    "ot": cmd_ot,
    "refine": cmd_refine,
    "run": cmd_run,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        report = _COMMANDS[args.command](args)
        sys.stdout.write(jsonio.dumps(report))
        return EXIT_OK
    except ParameterError as exc:
        print(f"codi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"codi: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValidationError, NumericError) as exc:
        print(f"codi: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EngineError as exc:
        print(f"codi: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
