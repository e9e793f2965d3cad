from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from umsli import __version__, classify, dtg, metrics, pipeline, saliency, scene
from umsli.config import DEFAULT_LOG_FILE, load_config, pick, resolve_path
from umsli.errors import ConfigError, EmptyCorpus, InvalidParam, UmsliError
from umsli.image_io import list_images, load_image, load_mask, save_array, save_image
from umsli.preprocess import StructuringElement, illumination_correct
from umsli.runlog import append_run_log

Outcome = Tuple[int, str]

BOX_COLUMNS = ("x", "y", "w", "h", "score")
DIR_BOX_COLUMNS = ("file", "x", "y", "w", "h", "score")
TIMING_COLUMNS = ("file", "detect_s", "total_s")


def _info(args: argparse.Namespace, message: str) -> None:
    if getattr(args, "verbose", False):
        print(f"[INFO] {message}")


def _warn(message: str) -> None:
    print(f"[WARN] {message}", file=sys.stderr)


def _se(args: argparse.Namespace, config: Dict[str, Any], width: int, height: int) -> StructuringElement:
    text = pick(getattr(args, "se", None), config, "se")
    return StructuringElement.parse(text) if text else StructuringElement.default_for(width, height)


def _bank(args: argparse.Namespace, config: Dict[str, Any]) -> saliency.GammaKernelBank:
    return saliency.kernel_bank(saliency.parse_bank(pick(getattr(args, "bank", None), config, "bank")))


def _library(args: argparse.Namespace, config: Dict[str, Any]) -> classify.TemplateLibrary:
    n_points = int(config["n_points"])
    path = pick(getattr(args, "library", None), config, "library")
    if path:
        return classify.TemplateLibrary.load(
            Path(path), n_points, int(config["r_bins"]), int(config["theta_bins"])
        )
    return classify.synthetic_library(seed=int(config["seed"]), n_points=n_points)


def _write_boxes(path: Path, rows: List[List[Any]], columns: Tuple[str, ...]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _box_row(b: saliency.DetectedBox) -> List[Any]:
    return [b.x, b.y, b.w, b.h, f"{b.score:.6f}"]


# -- subcommands ---------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    image = load_image(Path(args.input))
    se = _se(args, config, image.width, image.height)
    enhanced = illumination_correct(image, se)
    out = Path(args.output)
    background = Path(args.out_background) if args.out_background else out.with_name(
        f"{out.stem}_background{out.suffix}"
    )
    bit_depth = int(config["bit_depth"])
    save_image(out, enhanced.clamped(), bit_depth)
    save_image(background, enhanced.background, bit_depth)
    return 0, f"[OK] wrote {out} and {background} (se {se})"


def _detect_one(
    path: Path, bank: saliency.GammaKernelBank, args: argparse.Namespace, config: Dict[str, Any]
) -> Tuple[saliency.SaliencyResult, float, float]:
    started = time.perf_counter()
    image = load_image(path)
    se = _se(args, config, image.width, image.height)
    detect_started = time.perf_counter()
    result = saliency.detect(
        image,
        bank,
        alpha=float(pick(args.alpha, config, "alpha")),
        min_area=int(pick(args.min_area, config, "min_area")),
        se=se,
    )
    detected = time.perf_counter() - detect_started
    return result, detected, time.perf_counter() - started


def cmd_detect(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    bank = _bank(args, config)
    target = Path(args.input)
    if target.is_dir():
        return _detect_dir(target, bank, args, config)
    result, _, _ = _detect_one(target, bank, args, config)
    if args.out_map:
        save_array(Path(args.out_map), result.map, bit_depth=8)
    if args.out_boxes:
        _write_boxes(Path(args.out_boxes), [_box_row(b) for b in result.boxes], BOX_COLUMNS)
    return 0, f"[OK] {len(result.boxes)} box(es) in {target.name} (bank {bank.describe()})"


def _detect_dir(
    directory: Path, bank: saliency.GammaKernelBank, args: argparse.Namespace, config: Dict[str, Any]
) -> Outcome:
    if not args.out_dir:
        raise InvalidParam("--out-dir is required when the input is a directory")
    out_dir = Path(args.out_dir)
    files = list_images(directory)
    if not files:
        raise EmptyCorpus(f"no images in {directory}")
    box_rows: List[List[Any]] = []
    timing_rows: List[List[Any]] = []
    skipped = 0
    for path in files:
        try:
            result, detect_s, total_s = _detect_one(path, bank, args, config)
        except UmsliError as exc:
            _warn(f"skipped {path.name}: {exc}")
            skipped += 1
            continue
        save_array(out_dir / f"{path.stem}.png", result.map, bit_depth=8)
        box_rows.extend([path.name, *_box_row(b)] for b in result.boxes)
        timing_rows.append([path.name, f"{detect_s:.6f}", f"{total_s:.6f}"])
        _info(args, f"{path.name}: {len(result.boxes)} box(es)")
    _write_boxes(out_dir / "boxes.csv", box_rows, DIR_BOX_COLUMNS)
    _write_boxes(out_dir / "timings.csv", timing_rows, TIMING_COLUMNS)
    message = f"[OK] {len(files) - skipped}/{len(files)} image(s) -> {out_dir}"
    return (1 if skipped else 0), message


def cmd_eval(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    average = "macro" if args.macro else pick(None, config, "average")
    if average not in ("micro", "macro"):
        raise ConfigError(f"invalid average={average!r}: micro or macro")
    report = metrics.evaluate_corpus(Path(args.maps), Path(args.gt), average)
    for line in report.errors:
        _warn(line)
    metrics.write_report(Path(args.out), report)
    if args.curves:
        metrics.write_curves(Path(args.curves), report.curve)
    message = (
        f"[OK] {report.n_images} image(s), {average}: "
        f"F={report.f_measure:.4f} AUC={report.auc:.4f}"
    )
    return (1 if report.errors else 0), message


def cmd_classify(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    library = _library(args, config)
    mask = load_mask(Path(args.query))
    score = classify.classify(
        mask,
        library,
        config["sigma_schedule"],
        pick(args.mode, config, "classify_mode"),
        use_correntropy=not args.no_correntropy,
        max_iter=int(config["max_iter"]),
    )
    classify.write_score(Path(args.out), score)
    tie = " (tie)" if score.tie else ""
    return 0, f"[OK] predicted {score.predicted}{tie}"


def _dtg_settings(config: Dict[str, Any]) -> dtg.DtgSettings:
    return dtg.DtgSettings(
        model_steps=int(config["model_steps"]),
        steps=int(config["dtg_steps"]),
        episodes=int(config["dtg_episodes"]),
        gamma=float(config["gamma"]),
        alpha=float(config["dtg_alpha"]),
        d0=float(config["d0"]),
        epsilon=float(config["epsilon"]),
        d_max=float(config["d_max"]),
        temperature=float(config["dtg_temperature"]) or None,
        support=float(config["dtg_support"]),
    )


def cmd_select(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    library = _library(args, config)
    n = int(pick(args.n, config, "n_select"))
    seed = int(config["seed"])
    chosen = dtg.select_templates(library, args.method, n, seed, _dtg_settings(config))
    dtg.write_selection(Path(args.out), library, chosen)
    total = sum(len(r.indices) for r in chosen.values())
    return 0, f"[OK] {args.method} selected {total} template(s) across {len(chosen)} class(es)"


def cmd_select_eval(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    library = _library(args, config)
    selection = dtg.read_selection(Path(args.selection))
    queries = classify.load_queries(Path(args.queries))
    result = dtg.evaluate_selection(
        library,
        selection,
        queries,
        sigmas=config["sigma_schedule"],
        mode=config["classify_mode"],
        max_iter=int(config["max_iter"]),
    )
    classify.write_confusion(Path(args.out), result)
    if result.failures:
        _warn(f"{result.failures} query mask(s) could not be classified")
    return (1 if result.failures else 0), f"[OK] accuracy {result.accuracy:.4f} on {len(queries)} queries"


def cmd_run(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    cfg = pipeline.PipelineConfig.from_mapping(config)
    if args.scene and args.input:
        raise InvalidParam("give either --scene or --input, not both")
    if not args.scene and not args.input:
        raise InvalidParam("run needs --scene or --input")
    synthetic = scene.load_scene(Path(args.scene)) if args.scene else None
    result = pipeline.run_batch(
        cfg,
        Path(args.out),
        scene=synthetic,
        input_dir=Path(args.input) if args.input else None,
        n_frames=args.frames,
    )
    if result.log is not None:
        for event in result.log.of("error"):
            _warn(f"frame {event.frame} ({event.data['state']}): {event.data['message']}")
    prefix = "[OK]" if result.returncode == 0 else "[ERR]"
    return result.returncode, f"{prefix} {result.message}"


def cmd_gen_scene(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    seed = int(config["seed"])
    out = Path(args.out)
    if args.corpus:
        paths = scene.generate_corpus(
            out, args.corpus, seed, args.width, args.height, bit_depth=int(config["bit_depth"])
        )
        return 0, f"[OK] wrote {len(paths.frames)} scene(s) under {out}"
    rng = np.random.default_rng(seed)
    synthetic = scene.random_scene(
        rng,
        args.width,
        args.height,
        max_speed=args.max_speed,
        seed=seed,
        dense_noise_reduction=float(config["dense_noise_reduction"]),
    )
    scene.save_scene(out, synthetic)
    return 0, f"[OK] wrote scene with {len(synthetic.objects)} object(s) to {out}"


def cmd_gen_library(args: argparse.Namespace, config: Dict[str, Any]) -> Outcome:
    classes = tuple(c.strip() for c in args.classes.split(",") if c.strip())
    library = classify.synthetic_library(
        classes, args.per_class, int(config["seed"]), int(config["n_points"])
    )
    out = Path(args.out)
    library.save(out)
    if args.queries:
        for i, (mask, name) in enumerate(
            classify.synthetic_queries(classes, args.queries, int(config["seed"]) + 1)
        ):
            save_array(out / "queries" / name / f"{i:04d}.png", mask.astype(float))
    return 0, f"[OK] wrote {len(library)} template(s) to {out}"


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umsli", description="Sparse/dense LiDAR image processing")
    parser.add_argument("--version", action="version", version=f"umsli {__version__}")
    parser.add_argument("--config", help="Path to umsli.toml for defaults.")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every random draw.")
    parser.add_argument("--verbose", action="store_true", help="Print [INFO] progress lines.")
    parser.add_argument("--log-file", help="Run log path (default workspace/run_log.jsonl).")
    sub = parser.add_subparsers(dest="cmd", required=True)

    pre = sub.add_parser("preprocess", help="Illumination correction by morphological opening.")
    pre.add_argument("input")
    pre.add_argument("output", help="Enhanced image (clamped for display).")
    pre.add_argument("--se", help="Structuring element, e.g. disk:32 or square:15.")
    pre.add_argument("--out-background", help="Background estimate path (default <output>_background).")
    pre.set_defaults(func=cmd_preprocess)

    det = sub.add_parser("detect", help="Gamma-kernel saliency map and boxes.")
    det.add_argument("input", help="Image file or directory of images.")
    det.add_argument("--bank", help="Kernel bank, e.g. k1:1,mu1:0.7,k2:24,mu2:1.0.")
    det.add_argument("--alpha", type=float, default=None, help="Adaptive threshold factor.")
    det.add_argument("--min-area", type=int, default=None, help="Smallest box area kept.")
    det.add_argument("--se", help="Structuring element for illumination correction.")
    det.add_argument("--out-map", help="Saliency map output (single image).")
    det.add_argument("--out-boxes", help="Boxes CSV output (single image).")
    det.add_argument("--out-dir", help="Output directory (directory input).")
    det.set_defaults(func=cmd_detect)

    ev = sub.add_parser("eval", help="PR/ROC curves, AUC and F-measure over a corpus.")
    ev.add_argument("--maps", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--out", required=True, help="Summary report CSV.")
    ev.add_argument("--curves", help="Per-threshold curve CSV.")
    ev.add_argument("--macro", action="store_true", help="Average per image instead of pooling counts.")
    ev.set_defaults(func=cmd_eval)

    cl = sub.add_parser("classify", help="Classify a silhouette mask against a template library.")
    cl.add_argument("--library", help="Template library directory (default: synthetic).")
    cl.add_argument("--query", required=True)
    cl.add_argument("--out", required=True)
    cl.add_argument("--mode", choices=["per_template", "aggregate"], default=None)
    cl.add_argument("--no-correntropy", action="store_true", help="Rank by descriptor distance only.")
    cl.set_defaults(func=cmd_classify)

    sel = sub.add_parser("select", help="Choose representative templates per class.")
    sel.add_argument("--method", choices=["dtg", "kmeans", "random"], required=True)
    sel.add_argument("--library", help="Template library directory (default: synthetic).")
    sel.add_argument("--n", type=int, default=None)
    sel.add_argument("--out", required=True)
    sel.set_defaults(func=cmd_select)

    se_ = sub.add_parser("select-eval", help="Confusion matrix using only the selected templates.")
    se_.add_argument("--selection", required=True)
    se_.add_argument("--library", help="Template library the selection indexes into.")
    se_.add_argument("--queries", required=True, help="Directory with one sub-directory per class.")
    se_.add_argument("--out", required=True)
    se_.set_defaults(func=cmd_select_eval)

    run = sub.add_parser("run", help="Sparse-to-dense pipeline on a scene or image directory.")
    run.add_argument("--scene", help="Scene description TOML.")
    run.add_argument("--input", help="Directory of sparse frames.")
    run.add_argument("--frames", type=int, default=20, help="Frames to render from a scene.")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    gs = sub.add_parser("gen-scene", help="Write a random scene description or a scored corpus.")
    gs.add_argument("--out", required=True)
    gs.add_argument("--width", type=int, default=128)
    gs.add_argument("--height", type=int, default=128)
    gs.add_argument("--max-speed", type=float, default=0.0)
    gs.add_argument("--corpus", type=int, default=0, help="Write N frames with ground truth instead.")
    gs.set_defaults(func=cmd_gen_scene)

    gl = sub.add_parser("gen-library", help="Write a synthetic template library.")
    gl.add_argument("--out", required=True)
    gl.add_argument("--classes", default=",".join(classify.SYNTHETIC_CLASSES))
    gl.add_argument("--per-class", type=int, default=20)
    gl.add_argument(
        "--queries", type=int, default=0, help="Also write N labelled queries per class under <out>/queries."
    )
    gl.set_defaults(func=cmd_gen_library)

    return parser


def _run(
    func: Callable[[argparse.Namespace, Dict[str, Any]], Outcome], args: argparse.Namespace, config
) -> Outcome:
    try:
        return func(args, config)
    except UmsliError as exc:
        return exc.returncode, f"[ERR] {exc}"
    except OSError as exc:
        return 2, f"[ERR] {exc}"


def main(argv: List[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    root = Path.cwd()
    started = time.perf_counter()
    try:
        config = load_config(root, args.config)
    except ConfigError as exc:
        print(f"[ERR] {exc}", file=sys.stderr)
        return exc.returncode
    if args.seed is not None:
        config["seed"] = args.seed
    if "_path" in config:
        _info(args, f"config {config['_path']}")

    rc, message = _run(args.func, args, config)
    stream = sys.stderr if message.startswith(("[ERR]", "[WARN]")) else sys.stdout
    print(message, file=stream)

    log_path = resolve_path(root, args.log_file or config.get("log_file")) or root / DEFAULT_LOG_FILE
    arguments = {k: v for k, v in vars(args).items() if k != "func"}
    append_run_log(
        log_path,
        command=args.cmd,
        arguments=arguments,
        returncode=rc,
        message=message,
        timings={"total_s": round(time.perf_counter() - started, 6)},
    )
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
