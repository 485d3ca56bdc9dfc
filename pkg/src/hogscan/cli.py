"""
Click CLI entry point for hogscan.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from hogscan import __version__, kv
from hogscan.config import Settings, load_settings
from hogscan.detect import DetectParams, detect, mine_hard_negatives, write_detections
from hogscan.display import render_detections, render_pairs, render_phases, render_reports, render_sweep
from hogscan.errors import HogscanError, TrainingError
from hogscan.evaluation import (
    AXES,
    config_echo,
    evaluate,
    parse_annotations,
    reports_to_csv,
    sweep,
    time_phases,
    tune_threshold,
)
from hogscan.hog import PRESETS, descriptor_len
from hogscan.raster import GrayImage, Image, as_gray, load_image
from hogscan.svm import LinearModel, TrainingSet, fit, read_model, sample_negative_windows, write_model
from hogscan.synthetic import make_scenes, write_corpus

console = Console()
err_console = Console(stderr=True)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png", ".jpg", ".jpeg", ".bmp")
BENCH_FRAME = (320, 240)

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("hogscan")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=err_console, show_path=False))
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def _overrides(**values) -> Dict[str, str]:
    """Command-line flags that were given, as config text values."""
    out: Dict[str, str] = {}
    for key, value in values.items():
        if value is None:
            continue
        if isinstance(value, bool):
            out[key] = "true" if value else "false"
        elif isinstance(value, float):
            out[key] = kv.format_float(value)
        else:
            out[key] = str(value)
    return out


def _image_files(directory: Path) -> List[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _load_dir(directory: Path) -> List[GrayImage]:
    return [as_gray(load_image(path)) for path in _image_files(directory)]


def _training_set(pos: Path, neg: Path, settings: Settings) -> TrainingSet:
    """Positive crops and seeded negative windows under the settings' window."""
    positives = _load_dir(pos)
    if not positives:
        raise TrainingError(f"positives: class is empty, no images in {pos}")
    negative_images = _load_dir(neg)
    if not negative_images:
        raise TrainingError(f"negatives: class is empty, no images in {neg}")
    negatives = sample_negative_windows(
        negative_images, settings.hog, per_image=settings.negatives_per_image, seed=settings.train.seed
    )
    logging.getLogger(__name__).info(
        "%d positives, %d negative windows from %d images", len(positives), len(negatives), len(negative_images)
    )
    return TrainingSet(positives=positives, negatives=negatives)


def _with_sampling(model: LinearModel, settings: Settings, **extra) -> LinearModel:
    meta = dict(model.meta)
    meta["negatives_per_image"] = settings.negatives_per_image
    meta.update(extra)
    return LinearModel(weights=model.weights, rho=model.rho, config=model.config, meta=meta)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    console.print(f"[green]Wrote[/green] {path}")


def _config_option(fn):
    return click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        default=None,
        help="Flat key = value file overriding the preset.",
    )(fn)


def _preset_option(fn):
    return click.option(
        "--preset",
        type=click.Choice(sorted(PRESETS)),
        default="realtime",
        show_default=True,
        help="Descriptor geometry to start from.",
    )(fn)


def _workers_option(fn):
    return click.option(
        "--workers", type=click.IntRange(min=1), default=1, show_default=True, help="Worker threads."
    )(fn)


def _detect_options(fn):
    fn = click.option("--tau", type=float, default=None, help="Decision threshold (default 1.05).")(fn)
    fn = click.option("--scale-step", type=float, default=None, help="Pyramid scale factor (> 1).")(fn)
    fn = click.option("--nms-overlap", type=float, default=None, help="IoU above which NMS suppresses.")(fn)
    fn = click.option("--no-nms", is_flag=True, default=False, help="Disable non-maximum suppression.")(fn)
    fn = click.option("--stride", type=int, default=None, help="Window stride in pixels (default: cell size).")(fn)
    return fn


def _detect_overrides(tau, scale_step, nms_overlap, no_nms, stride) -> Dict[str, str]:
    return _overrides(
        tau=tau,
        scale_step=scale_step,
        nms_overlap=nms_overlap,
        nms_enabled=False if no_nms else None,
        window_stride=stride,
    )


def _detect_params(config_path: Optional[Path], tau, scale_step, nms_overlap, no_nms, stride) -> DetectParams:
    overrides = _detect_overrides(tau, scale_step, nms_overlap, no_nms, stride)
    return load_settings(config_path, overrides=overrides).detect


# ---------------------------------------------------------------------------
# Root group
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(__version__, prog_name="hogscan")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging on stderr.")
def cli(verbose: bool) -> None:
    """hogscan: HOG + linear SVM human detection.

    Train a detector from window crops, scan images over a scale pyramid,
    and measure detection rate, false detections and timing on annotated sets.
    """
    _configure_logging(verbose)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@cli.command("train")
@click.option("--pos", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--neg", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Model file to write.")
@click.option("--C", "c_value", type=float, default=None, help="SVM cost parameter.")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--negatives-per-image", type=int, default=None, help="Random windows per negative image.")
@_config_option
@_preset_option
def cmd_train(
    pos: Path,
    neg: Path,
    out: Path,
    c_value: Optional[float],
    epochs: Optional[int],
    seed: Optional[int],
    negatives_per_image: Optional[int],
    config_path: Optional[Path],
    preset: str,
) -> None:
    """Train a model from positive crops and negative images."""
    settings = load_settings(
        config_path,
        preset,
        _overrides(C=c_value, epochs=epochs, seed=seed, negatives_per_image=negatives_per_image),
    )
    console.print(render_pairs(settings.to_pairs()))
    training = _training_set(pos, neg, settings)
    model = _with_sampling(fit(training, settings.hog, settings.train), settings)
    write_model(out, model)
    console.print(
        f"[green]Trained[/green] on {model.meta['positives']} positives / {model.meta['negatives']} negatives, "
        f"hinge {model.meta['final_hinge']:.4g} -> {out}"
    )


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


@cli.command("detect")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option(
    "--image",
    "images",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    multiple=True,
    required=True,
    help="Image to scan (repeatable).",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Detections file.")
@click.option(
    "--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl", show_default=True, help="Output format."
)
@_detect_options
@_config_option
@_workers_option
def cmd_detect(
    model_path: Path,
    images: Sequence[Path],
    out: Optional[Path],
    fmt: str,
    tau,
    scale_step,
    nms_overlap,
    no_nms,
    stride,
    config_path: Optional[Path],
    workers: int,
) -> None:
    """Scan images and report scored boxes."""
    model = read_model(model_path)
    params = _detect_params(config_path, tau, scale_step, nms_overlap, no_nms, stride)
    console.print(render_pairs(config_echo(model, params).items()))

    records = []
    for path in images:
        detections = detect(load_image(path), model, params, workers=workers)
        records.extend((str(path), d) for d in detections)
        if out is None:
            console.print(render_detections(detections, str(path)))
    if out is not None:
        _write_text(out, write_detections(records, fmt))
    console.print(f"{len(records)} detection(s) in {len(images)} image(s)")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@cli.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--images-root", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Report file.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--name", default=None, help="Dataset name in the report (default: annotation file stem).")
@click.option("--taus", default=None, help="Comma-separated thresholds to tune over instead of --tau.")
@_detect_options
@_config_option
@_workers_option
def cmd_eval(
    model_path: Path,
    annotations: Path,
    images_root: Optional[Path],
    out: Optional[Path],
    fmt: str,
    name: Optional[str],
    taus: Optional[str],
    tau,
    scale_step,
    nms_overlap,
    no_nms,
    stride,
    config_path: Optional[Path],
    workers: int,
) -> None:
    """Detection rate, false detections and timing over an annotated set."""
    model = read_model(model_path)
    params = _detect_params(config_path, tau, scale_step, nms_overlap, no_nms, stride)
    dataset = parse_annotations(annotations.read_bytes())
    root = images_root if images_root is not None else annotations.parent
    name = name or annotations.stem
    console.print(render_pairs(config_echo(model, params).items()))

    if taus:
        candidates = [kv.parse_float("taus", text.strip()) for text in taus.split(",") if text.strip()]
        best, reports = tune_threshold(dataset, model, params, candidates, images_root=root, workers=workers)
        console.print(render_reports(reports, title=f"Threshold tuning: {name}"))
        console.print(f"Best tau = {kv.format_float(best)}")
        if out is not None:
            if fmt == "csv":
                text = reports_to_csv(reports)
            else:
                doc = {"best_tau": best, "reports": [r.to_dict() for r in reports]}
                text = json.dumps(doc, indent=2) + "\n"
            _write_text(out, text)
        return

    report = evaluate(dataset, model, params, images_root=root, workers=workers, name=name)
    console.print(render_reports([report]))
    for image, message in report.errors:
        err_console.print(f"[yellow]Skipped {escape(image)}:[/yellow] {escape(message)}")
    if out is not None:
        _write_text(out, reports_to_csv([report]) if fmt == "csv" else report.to_json())


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@cli.command("sweep")
@click.option("--axis", type=click.Choice(AXES), required=True, help="Parameter to vary.")
@click.option("--values", "values_text", required=True, help="Comma-separated values, e.g. 0.5,1.0,off.")
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--images-root", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--pos", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--neg", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="CSV table to write.")
@_config_option
@_preset_option
@_workers_option
def cmd_sweep(
    axis: str,
    values_text: str,
    annotations: Path,
    images_root: Optional[Path],
    model_path: Optional[Path],
    pos: Optional[Path],
    neg: Optional[Path],
    out: Optional[Path],
    config_path: Optional[Path],
    preset: str,
    workers: int,
) -> None:
    """Evaluate one row per value of a single parameter.

    The threshold axis reuses --model; other axes retrain from --pos/--neg.
    """
    values = [v.strip() for v in values_text.split(",") if v.strip()]
    if not values:
        raise click.UsageError("--values: need at least one value")
    if axis == "threshold" and model_path is None:
        raise click.UsageError("--axis threshold needs --model")
    if axis != "threshold" and (pos is None or neg is None):
        raise click.UsageError(f"--axis {axis} needs --pos and --neg to retrain")

    settings = load_settings(config_path, preset)
    console.print(render_pairs(settings.to_pairs()))
    model = read_model(model_path) if model_path is not None else None
    base = model.config if model is not None and axis == "threshold" else settings.hog
    training = _training_set(pos, neg, settings) if axis != "threshold" else None
    dataset = parse_annotations(annotations.read_bytes())
    table = sweep(
        dataset,
        base,
        axis,
        values,
        settings.detect,
        train_params=settings.train,
        model=model,
        training=training,
        images_root=images_root if images_root is not None else annotations.parent,
        workers=workers,
    )
    console.print(render_sweep(table))
    if out is not None:
        _write_text(out, table.to_csv())


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------


@cli.command("describe")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
def cmd_describe(model_path: Path) -> None:
    """Print a model's configuration block and descriptor length."""
    model = read_model(model_path)
    click.echo(kv.format_key_values(model.config.to_pairs()), nl=False)
    click.echo(f"descriptor_len = {descriptor_len(model.config)}")
    click.echo(f"rho = {kv.format_exact(model.rho)}")
    for key, value in model.meta.items():
        click.echo(f"meta.{key} = {value}")


# ---------------------------------------------------------------------------
# retrain-with-negatives
# ---------------------------------------------------------------------------


@cli.command("retrain-with-negatives")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--pos", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--neg", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option(
    "--scan",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    default=None,
    help="Target-free images to mine false positives from (default: --neg).",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_detect_options
@_config_option
def cmd_retrain(
    model_path: Path,
    pos: Path,
    neg: Path,
    scan: Optional[Path],
    out: Path,
    tau,
    scale_step,
    nms_overlap,
    no_nms,
    stride,
    config_path: Optional[Path],
) -> None:
    """Add the model's false positives to the negatives and train again."""
    model = read_model(model_path)
    settings = load_settings(config_path, overrides=_detect_overrides(tau, scale_step, nms_overlap, no_nms, stride))
    settings = Settings(
        hog=model.config, detect=settings.detect, train=settings.train, negatives_per_image=settings.negatives_per_image
    )
    console.print(render_pairs(settings.to_pairs()))

    training = _training_set(pos, neg, settings)
    hard = mine_hard_negatives(_load_dir(scan or neg), model, settings.detect)
    console.print(f"Mined {len(hard)} hard negative(s)")
    training = TrainingSet(positives=training.positives, negatives=training.negatives + hard)
    retrained = _with_sampling(fit(training, settings.hog, settings.train), settings, hard_negatives=len(hard))
    write_model(out, retrained)
    console.print(f"[green]Retrained[/green] -> {out}")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@cli.command("bench")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option(
    "--image",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Frame to time (default: a synthetic 320x240 scene).",
)
@click.option("--repeats", type=click.IntRange(min=1), default=5, show_default=True)
@_detect_options
@_config_option
def cmd_bench(
    model_path: Path,
    image: Optional[Path],
    repeats: int,
    tau,
    scale_step,
    nms_overlap,
    no_nms,
    stride,
    config_path: Optional[Path],
) -> None:
    """Median end-to-end and per-phase detection time on one frame."""
    model = read_model(model_path)
    params = _detect_params(config_path, tau, scale_step, nms_overlap, no_nms, stride)
    console.print(render_pairs(config_echo(model, params).items()))
    frame: Image = load_image(image) if image is not None else make_scenes(1, size=BENCH_FRAME)[0][0]
    phases = time_phases(frame, model, params, repeats=repeats)
    console.print(render_phases(phases, title=f"Timing on {frame.width}x{frame.height} (median of {repeats})"))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@cli.command("synth")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True, help="Corpus directory.")
@click.option("--positives", type=click.IntRange(min=0), default=200, show_default=True)
@click.option("--negative-images", type=click.IntRange(min=0), default=20, show_default=True)
@click.option("--scenes", type=click.IntRange(min=0), default=50, show_default=True)
@click.option("--offset-negatives", type=click.IntRange(min=0), default=100, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
def cmd_synth(out: Path, positives: int, negative_images: int, scenes: int, offset_negatives: int, seed: int) -> None:
    """Write a seeded synthetic corpus (pos/, neg/, scenes/, annotations.txt)."""
    path = write_corpus(
        out,
        positives=positives,
        negative_images=negative_images,
        scenes=scenes,
        seed=seed,
        offset_negatives=offset_negatives,
    )
    console.print(f"[green]Wrote[/green] corpus to {out} (annotations: {path})")


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit code.

    0 on success, 1 on a usage error, 2 on bad data or I/O failure.
    """
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        rv = cli.main(args=args, prog_name="hogscan", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        err_console.print("[red]Aborted.[/red]")
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except (HogscanError, OSError) as exc:
        err_console.print(f"[red]Error:[/red] {escape(str(exc))}")
        return 2
    return rv if isinstance(rv, int) else 0


def main() -> None:
    sys.exit(run())
