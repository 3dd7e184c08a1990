"""Command-line entry point: synth | train | summarize | eval | gradcheck.

Every verb takes ``--seed``, ``--config`` and ``--out``. A config file is a
JSON object whose keys are StackConfig, SynthConfig or SegmentConfig field
names; it may be flat (fields of the verb's own config) or split into
``"stack"``, ``"synth"`` and ``"segment"`` sections. Outputs are written
atomically, so a failing command leaves no file behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import PHI, TAU, evaluate
from .gradcheck import MAX_DIM, MAX_STEPS, run_gradcheck
from .io import (
    FormatError,
    atomic_write_text,
    dumps,
    load_checkpoint,
    load_dataset,
    load_scores,
    predictions_from_scores,
    report_to_doc,
    save_checkpoint,
    save_dataset,
    save_scores,
)
from .pipeline import frame_level_scores, still_sequences_from_trajectories, summarize_stream
from .segment import SegmentConfig
from .stack import StackConfig, greedy_train, init_stack
from .synth import SynthConfig, generate

logger = logging.getLogger("motion_ae")

SECTIONS = ("stack", "synth", "segment")


class CliError(Exception):
    """A contract violation reported to the user as a one-line diagnostic."""


# ---------------------------------------------------------------------------
# Config handling


def _read_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"config file {p} must hold a JSON object")
    return doc


def _section(doc: dict, name: str) -> dict:
    """Fields for ``name``: its own section if present, else the flat document."""
    if any(key in doc for key in SECTIONS):
        extra = set(doc) - set(SECTIONS)
        if extra:
            raise CliError(f"config mixes sections with top-level fields: {sorted(extra)}")
        return dict(doc.get(name, {}))
    return dict(doc)


def _segment_config(data: dict) -> SegmentConfig:
    known = {f.name for f in fields(SegmentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown SegmentConfig field(s): {sorted(unknown)}")
    return SegmentConfig(**data)


# ---------------------------------------------------------------------------
# Verbs


def cmd_synth(args) -> int:
    data = _section(_read_config(args.config), "synth")
    if args.seed is not None:
        data["seed"] = args.seed
    config = SynthConfig.from_dict(data)
    ds = generate(config)
    save_dataset(ds, args.out)
    print(
        f"wrote {args.out}: {len(ds.trajectories)} trajectories, "
        f"{len(ds.ground_truth)} ground-truth clips, {ds.total_frames} frames"
    )
    return 0


def cmd_train(args) -> int:
    data = _section(_read_config(args.config), "stack")
    if args.seed is not None:
        data["seed"] = args.seed
    config = StackConfig.from_dict(data)
    ds = load_dataset(args.dataset)
    if ds.feature_dim != config.input_dim:
        raise CliError(
            f"dataset feature_dim {ds.feature_dim} does not match config field input_dim {config.input_dim}"
        )
    seqs = still_sequences_from_trajectories(
        ds.trajectories, ds.total_frames, boxes_per_frame=args.boxes_per_frame,
        seed=config.seed, copies=config.seq_len,
    )
    print(f"training on {len(seqs)} still sequences, layers {list(config.hidden_dims)}")

    def report(layer: int, epoch: int, loss: float) -> None:
        print(f"layer {layer} epoch {epoch + 1} loss {loss:.6g}", flush=True)

    model = greedy_train(init_stack(config), seqs, config, on_epoch=report)
    save_checkpoint(model, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_summarize(args) -> int:
    doc = _read_config(args.config)
    segment = _segment_config(_section(doc, "segment")) if doc else SegmentConfig()
    model = load_checkpoint(args.checkpoint)
    if args.seed is not None and args.seed != model.config.seed:
        logger.warning("--seed %d ignored: the checkpoint was trained with seed %d", args.seed, model.config.seed)
    ds = load_dataset(args.dataset)
    if ds.trajectories and ds.feature_dim != model.config.input_dim:
        raise CliError(
            f"dataset feature_dim {ds.feature_dim} does not match checkpoint input_dim {model.config.input_dim}"
        )
    scores, _ = summarize_stream(model, ds.trajectories, ds.total_frames, args.chunk_size, segment)
    frame_scores = frame_level_scores(
        [s.score for s in scores], [(s.clip.start, s.clip.end) for s in scores], ds.total_frames
    )
    save_scores(scores, frame_scores, ds.total_frames, args.out)
    print(f"wrote {args.out}: {len(scores)} clips")
    return 0


def cmd_eval(args) -> int:
    scores_doc = load_scores(args.scores)
    ds = load_dataset(args.dataset)
    total = scores_doc.get("total_frames")
    if total is not None and int(total) != ds.total_frames:
        raise CliError(f"score file covers {total} frames but the dataset has total_frames {ds.total_frames}")
    preds = predictions_from_scores(scores_doc)
    for p in preds:
        if p.end >= ds.total_frames:
            raise CliError(f"predicted clip [{p.start}, {p.end}] lies outside the dataset's {ds.total_frames} frames")
    report = evaluate(preds, ds.ground_truth, args.phi, args.tau)
    text = dumps(report_to_doc(report.to_dict()))
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def _corrupt(grads):
    # test hook: perturb the output bias gradient by about 1%
    arrays = dict(grads.named_arrays())
    arrays["b_h"] = arrays["b_h"] * 1.01 + 1e-3
    return type(grads).from_named_arrays(arrays)


def cmd_gradcheck(args) -> int:
    if args.seeds < 20:
        raise CliError(f"--seeds must be at least 20, got {args.seeds}")
    report = run_gradcheck(
        n_seeds=args.seeds,
        betas=args.betas,
        base_seed=args.seed or 0,
        max_dim=args.max_dim,
        max_steps=args.max_steps,
        tol=args.tol,
        corrupt=_corrupt if args.corrupt_gradient else None,
    )
    for c in report.cases:
        status = "ok  " if c.passed else "FAIL"
        print(
            f"{status} seed={c.seed} beta={c.beta:g} d={c.input_dim} H={c.hidden_dim} "
            f"T={c.steps} K={c.batch} max_rel_error={c.max_rel_error:.3e} ({c.worst_param})"
        )
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict}: {len(report.cases)} cases, max relative error {report.max_rel_error:.3e} (tolerance {args.tol:g})")
    if args.out:
        atomic_write_text(args.out, dumps(report.to_dict()))
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, out_required: bool) -> None:
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--config", default=None, help="JSON file of config fields")
    p.add_argument("--out", required=out_required, default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motion-ae", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p, out_required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="offline greedy training on still sequences")
    p.add_argument("dataset")
    p.add_argument("--boxes-per-frame", type=int, default=30, help="still boxes sampled per frame")
    _common(p, out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="score a dataset's clips online")
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True, help="trained model from `train`")
    p.add_argument("--chunk-size", type=int, default=1000, help="frames per online update")
    _common(p, out_required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval", help="evaluate a score file against ground truth")
    p.add_argument("scores")
    p.add_argument("dataset")
    p.add_argument("--phi", type=float, default=PHI, help="IoU threshold for a match")
    p.add_argument("--tau", type=float, default=TAU, help="score threshold for P/R/F")
    _common(p, out_required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare BPTT gradients with finite differences")
    p.add_argument("--seeds", type=int, default=20, help="instances per beta (at least 20)")
    p.add_argument("--betas", type=float, nargs="+", default=[0.0, 0.1], help="sparsity weights to check")
    p.add_argument("--max-dim", type=int, default=MAX_DIM, help="largest input/hidden dimension")
    p.add_argument("--max-steps", type=int, default=MAX_STEPS, help="longest sequence")
    p.add_argument("--tol", type=float, default=1e-4, help="relative error tolerance")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    _common(p, out_required=False)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CliError, FormatError, FileNotFoundError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
