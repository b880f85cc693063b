"""Command line: ``memvos segment | evaluate | fuse``.

Exit status is 0 on success, 1 when some videos failed (the rest are still
processed) and 2 for invalid arguments.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .fusion import ScoreLog, VideoScore, fuse_pixel, select_runs
from .metrics import evaluate_video
from .numerics import ContractError
from .pipeline import Model, VideoTask, run_video_with_tta
from .pixel_memory import route_hyperparams

log = logging.getLogger("memvos")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_scales(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part in ("native", ""):
            out.append(None)
        elif part.isdigit() and int(part) > 0:
            out.append(int(part))
        else:
            raise argparse.ArgumentTypeError(f"bad scale {part!r}")
    return out


def _parse_onoff(text: str) -> bool:
    if text.lower() in ("on", "true", "1", "yes"):
        return True
    if text.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _parse_weights(text: str) -> list[float]:
    try:
        return [float(w) for w in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from None


# ---------------------------------------------------------------- segment

def _segment_settings(args) -> dict:
    doc = io.load_config(args.config) if args.config else {}
    for key in ("encoder", "seed", "max_mem_frames", "min_mem_frames", "top_k", "scales", "flip"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    scales = doc.get("scales") or [None]
    doc["scales"] = [None if s in (None, "native") else int(s) for s in scales]
    doc["flip"] = bool(doc.get("flip", False))
    # fail early on bad model or memory settings
    io.model_config(doc)
    io.memory_override(doc, route_hyperparams(1))
    return doc


def _segment_video(root: str, video: str, out: str, settings: dict, weights, save_probs: bool) -> str | None:
    try:
        paths = io.frame_paths(root, video)
        if not paths:
            raise ContractError("no frames")
        ann_path = io.annotation_path(root, video, paths[0])
        if not ann_path.is_file():
            raise ContractError(f"missing first-frame annotation {ann_path}")
        task = VideoTask(
            video_id=video,
            frames=[io.load_frame(p) for p in paths],
            annotation=io.read_mask(ann_path),
            model=io.model_config(settings),
        )
        task.memory = io.memory_override(settings, route_hyperparams(len(paths)))
        results = run_video_with_tta(task, settings["scales"], settings["flip"], weights, Model(task.model))
        for p, res in zip(paths, results):
            io.write_result(Path(out) / video, p.stem, res, save_probs)
    except (ContractError, OSError, ValueError) as exc:
        return f"{video}: {exc}"
    return None


def cmd_segment(args) -> int:
    try:
        settings = _segment_settings(args)
        videos = io.list_videos(args.dataset)
    except (ContractError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    n_variants = len(settings["scales"]) * (2 if settings["flip"] else 1)
    if args.weights is not None and len(args.weights) != n_variants:
        raise UsageError(f"{len(args.weights)} weights given for {n_variants} variants")

    log.info("segmenting %d videos with %d variants each", len(videos), n_variants)
    job = (args.dataset, args.output, settings, args.weights, args.save_probs)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            errors = list(pool.map(_segment_video_star, [(args.dataset, v, *job[1:]) for v in videos]))
    else:
        errors = [_segment_video(args.dataset, v, *job[1:]) for v in videos]
    return _report(errors)


def _segment_video_star(a):
    return _segment_video(*a)


def _report(errors) -> int:
    errors = [e for e in errors if e]
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_PARTIAL if errors else EXIT_OK


# ---------------------------------------------------------------- evaluate

def _mask_root(path: Path) -> Path:
    return path / "Annotations" if (path / "Annotations").is_dir() else path


def _mask_stems(d: Path) -> list[str]:
    return sorted(p.stem for p in d.glob("*.png"))


def cmd_evaluate(args) -> int:
    pred_root = _mask_root(Path(args.pred))
    gt_root = _mask_root(Path(args.gt))
    if not gt_root.is_dir():
        raise UsageError(f"{args.gt}: not a directory")
    pred_videos = sorted(p.name for p in pred_root.iterdir() if p.is_dir()) if pred_root.is_dir() else []
    if not pred_videos:
        print(f"error: no predictions under {args.pred}", file=sys.stderr)
        return EXIT_PARTIAL

    scores, errors = {}, []
    for video in sorted(p.name for p in gt_root.iterdir() if p.is_dir()):
        try:
            gt_stems = _mask_stems(gt_root / video)
            pred_stems = _mask_stems(pred_root / video) if (pred_root / video).is_dir() else []
            if gt_stems != pred_stems:
                raise ContractError(f"frame mismatch ({len(pred_stems)} predicted, {len(gt_stems)} ground truth)")
            gts = [io.read_mask(gt_root / video / f"{s}.png") for s in gt_stems]
            preds = [io.read_mask(pred_root / video / f"{s}.png") for s in pred_stems]
            s = evaluate_video(preds, gts)
            scores[video] = VideoScore(s["J"], s["F"], s["JF"])
        except (ContractError, OSError) as exc:
            errors.append(f"{video}: {exc}")

    mean = None
    if scores:
        j = float(np.mean([s.J for s in scores.values()]))
        f = float(np.mean([s.F for s in scores.values()]))
        mean = VideoScore(j, f, (j + f) / 2)
    score_log = ScoreLog(args.run_id or Path(args.pred).name, scores, mean)
    if args.output:
        score_log.save(args.output)
    else:
        sys.stdout.write(score_log.dumps())
    return _report(errors)


# ---------------------------------------------------------------- fuse

def _frame_sets(run: Path) -> dict[str, list[str]]:
    return {d.name: _mask_stems(d) for d in sorted(run.iterdir()) if d.is_dir()}


def cmd_fuse(args) -> int:
    runs = [Path(r) for r in args.runs]
    for r in runs:
        if not r.is_dir():
            raise UsageError(f"{r}: not a directory")
    out = Path(args.output)
    if args.video_level:
        return _fuse_video_level(runs, args.logs or [], out)
    if args.weights is not None and len(args.weights) != len(runs):
        raise UsageError(f"{len(args.weights)} weights for {len(runs)} runs")

    layout = _frame_sets(runs[0])
    errors = []
    for video, stems in layout.items():
        try:
            for r in runs[1:]:
                if _mask_stems(r / video) != stems:
                    raise ContractError(f"run {r} has a different frame set")
            for stem in stems:
                results = [io.read_result(r / video, stem) for r in runs]
                try:
                    fused = fuse_pixel(results, args.weights)
                except ContractError as exc:
                    raise ContractError(f"frame {stem}: {exc}") from None
                io.write_result(out / video, stem, fused, probs=True)
        except (ContractError, OSError) as exc:
            errors.append(f"{video}: {exc}")
    return _report(errors)


def _fuse_video_level(runs: list[Path], log_paths: list[str], out: Path) -> int:
    if len(log_paths) != len(runs):
        raise UsageError(f"video-level fusion needs one log per run ({len(runs)} runs, {len(log_paths)} logs)")
    try:
        logs = [ScoreLog.load(p) for p in log_paths]
        run_dirs = {lg.run_id: r for lg, r in zip(logs, runs)}
        if len(run_dirs) != len(runs):
            raise ContractError("run ids in the logs are not unique")
        selection = select_runs(logs)
    except (ContractError, OSError, KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    errors = []
    for video, run_id in selection.items():
        src = run_dirs[run_id] / video
        if not src.is_dir():
            errors.append(f"{video}: missing from run {run_id}")
            continue
        dst = out / video
        dst.mkdir(parents=True, exist_ok=True)
        for f in sorted(src.iterdir()):
            if f.is_file():
                shutil.copyfile(f, dst / f.name)
    sys.stdout.write(json.dumps({"selection": selection}, indent=2, sort_keys=True) + "\n")
    return _report(errors)


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memvos", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment every video of a dataset")
    seg.add_argument("dataset")
    seg.add_argument("output")
    seg.add_argument("--config", help="JSON run configuration")
    seg.add_argument("--encoder", choices=("toy", "analytic"))
    seg.add_argument("--seed", type=int)
    seg.add_argument("--scales", type=_parse_scales, help="comma list of shorter-side sizes or 'native'")
    seg.add_argument("--flip", type=_parse_onoff, help="on/off")
    seg.add_argument("--max-mem-frames", dest="max_mem_frames", type=int)
    seg.add_argument("--min-mem-frames", dest="min_mem_frames", type=int)
    seg.add_argument("--top-k", dest="top_k", type=int)
    seg.add_argument("--weights", type=_parse_weights, help="per-variant fusion weights")
    seg.add_argument("--save-probs", action="store_true", help="write .prob sidecars for pixel fusion")
    seg.add_argument("--jobs", type=int, default=1)
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("pred")
    ev.add_argument("gt")
    ev.add_argument("--output", "-o")
    ev.add_argument("--run-id")
    ev.set_defaults(func=cmd_evaluate)

    fu = sub.add_parser("fuse", help="fuse several runs")
    fu.add_argument("output")
    fu.add_argument("runs", nargs="+")
    fu.add_argument("--weights", type=_parse_weights)
    fu.add_argument("--video-level", action="store_true", help="pick whole videos by J&F from score logs")
    fu.add_argument("--logs", nargs="+", help="one ScoreLog per run, in run order")
    fu.set_defaults(func=cmd_fuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
