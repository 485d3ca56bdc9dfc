"""
Evaluation harness: annotation files, detection-to-target matching, report
aggregation, threshold tuning, per-phase timing and parameter sweeps.

A detection matches a target when it covers more than half of the target's
area; matching is greedy by descending score and consumes each target once.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from hogscan import kv
from hogscan.detect import Box, Detection, DetectParams, PhaseTimer, detect, intersection_area, nms
from hogscan.errors import AnnotationError, ConfigError, HogscanError, ParameterError
from hogscan.hog import GradientFilter, HogConfig
from hogscan.raster import Image, load_image
from hogscan.svm import LinearModel, TrainingSet, TrainParams, fit

logger = logging.getLogger(__name__)

AXES = ("gamma", "filter", "cell_size", "block_size", "threshold")
FALSE_RATE_DENOMINATOR = "targets"

Loader = Callable[[str], Image]


def percent(rate: float) -> int:
    """Whole percent, rounded half up."""
    return int(math.floor(rate * 100.0 + 0.5))


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    """Ground-truth target boxes of one image."""

    image_path: str
    targets: Tuple[Box, ...] = ()


def parse_annotations(data: Union[bytes, str]) -> List[Annotation]:
    """
    Parse ``<image_path> <n> <x y w h> * n`` lines.

    Blank lines and lines starting with ``#`` are ignored.

    Raises:
        AnnotationError: With the line number of the first malformed line.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            number = data[: exc.start].count(b"\n") + 1
            raise AnnotationError(f"not UTF-8 text at byte {exc.start}", number) from exc
    else:
        text = data
    annotations: List[Annotation] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise AnnotationError("expected '<image_path> <n> ...'", number)
        path, count_text, coords = tokens[0], tokens[1], tokens[2:]
        try:
            count = int(count_text)
        except ValueError:
            raise AnnotationError(f"target count {count_text!r} is not an integer", number) from None
        if count < 0:
            raise AnnotationError(f"target count must be >= 0, got {count}", number)
        if len(coords) != 4 * count:
            raise AnnotationError(
                f"declared {count} targets, expected {4 * count} coordinates, got {len(coords)}", number
            )
        try:
            values = [int(v) for v in coords]
        except ValueError:
            raise AnnotationError("box coordinates must be integers", number) from None
        boxes = tuple(tuple(values[i : i + 4]) for i in range(0, len(values), 4))
        for box in boxes:
            if box[2] <= 0 or box[3] <= 0:
                raise AnnotationError(f"box {box} must have positive width and height", number)
        annotations.append(Annotation(image_path=path, targets=boxes))
    return annotations


def format_annotations(annotations: Iterable[Annotation]) -> str:
    lines = []
    for a in annotations:
        coords = " ".join(str(v) for box in a.targets for v in box)
        lines.append(f"{a.image_path} {len(a.targets)}" + (f" {coords}" if coords else ""))
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def covers_half(detection: Box, target: Box) -> bool:
    """True when the detection covers strictly more than half the target area."""
    return 2 * intersection_area(detection, target) > target[2] * target[3]


def match_detections(detections: Sequence[Detection], targets: Sequence[Box]) -> Tuple[int, int]:
    """
    Greedy one-to-one matching by descending detection score.

    Each detection takes the free target it covers best (more than half of the
    target's area); detections left without a target are false detections.

    Returns:
        (matched target count, false detection count)
    """
    free = list(range(len(targets)))
    matched = 0
    false = 0
    for d in sorted(detections, key=lambda det: -det.score):
        best: Optional[int] = None
        best_cover = 0.0
        for index in free:
            target = targets[index]
            if not covers_half(d.box, target):
                continue
            cover = intersection_area(d.box, target) / (target[2] * target[3])
            if best is None or cover > best_cover:
                best, best_cover = index, cover
        if best is None:
            false += 1
        else:
            free.remove(best)
            matched += 1
    return matched, false


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class ImageResult:
    """Outcome of running the detector on one annotated image."""

    image_path: str
    targets: int = 0
    detected: int = 0
    false_detections: int = 0
    detections: int = 0
    total_ms: float = 0.0
    decode_ms: float = 0.0
    phase_ms: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class EvalReport:
    """Aggregate detection counts, rates and timing over a dataset."""

    images: int = 0
    targets: int = 0
    detected_targets: int = 0
    false_detections: int = 0
    detections: int = 0
    mean_ms_per_image: float = 0.0
    mean_decode_ms: float = 0.0
    phase_ms: Dict[str, float] = field(default_factory=dict)
    config: Dict[str, str] = field(default_factory=dict)
    errors: List[Tuple[str, str]] = field(default_factory=list)
    name: str = ""

    @property
    def detection_rate(self) -> float:
        return self.detected_targets / self.targets if self.targets else 0.0

    @property
    def false_rate(self) -> float:
        return self.false_detections / self.targets if self.targets else 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "images": self.images,
            "targets": self.targets,
            "detected_targets": self.detected_targets,
            "false_detections": self.false_detections,
            "detections": self.detections,
            "detection_rate": self.detection_rate,
            "detection_pct": percent(self.detection_rate),
            "false_rate": self.false_rate,
            "false_pct": percent(self.false_rate),
            "false_rate_denominator": FALSE_RATE_DENOMINATOR,
            "mean_ms_per_image": self.mean_ms_per_image,
            "mean_decode_ms": self.mean_decode_ms,
            "phase_ms": dict(self.phase_ms),
            "errors": [{"image": image, "error": message} for image, message in self.errors],
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    CSV_COLUMNS = (
        "name",
        "images",
        "targets",
        "detected",
        "detected_pct",
        "false_detections",
        "false_pct",
        "detections",
        "mean_ms_per_image",
    )

    def csv_row(self) -> List[str]:
        return [
            self.name,
            str(self.images),
            str(self.targets),
            str(self.detected_targets),
            str(percent(self.detection_rate)),
            str(self.false_detections),
            str(percent(self.false_rate)),
            str(self.detections),
            f"{self.mean_ms_per_image:.3f}",
        ]


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(EvalReport.CSV_COLUMNS)
    for report in reports:
        writer.writerow(report.csv_row())
    return buffer.getvalue()


def aggregate(results: Sequence[ImageResult], config: Optional[Dict[str, str]] = None, name: str = "") -> EvalReport:
    """
    Sum per-image results into a report.

    Images that failed to load are listed in ``errors`` and left out of every
    count and mean.
    """
    good = [r for r in results if r.error is None]
    errors = [(r.image_path, r.error) for r in results if r.error is not None]
    count = len(good)
    phases: Dict[str, float] = {}
    for r in good:
        for phase, ms in r.phase_ms.items():
            phases[phase] = phases.get(phase, 0.0) + ms
    return EvalReport(
        images=count,
        targets=sum(r.targets for r in good),
        detected_targets=sum(r.detected for r in good),
        false_detections=sum(r.false_detections for r in good),
        detections=sum(r.detections for r in good),
        mean_ms_per_image=sum(r.total_ms for r in good) / count if count else 0.0,
        mean_decode_ms=sum(r.decode_ms for r in good) / count if count else 0.0,
        phase_ms={phase: total / count for phase, total in phases.items()},
        config=dict(config or {}),
        errors=errors,
        name=name,
    )


def merge_reports(reports: Sequence[EvalReport], name: str = "All") -> EvalReport:
    """Combine per-dataset reports into one row, weighting means by image count."""
    images = sum(r.images for r in reports)

    def weighted(getter: Callable[[EvalReport], float]) -> float:
        return sum(getter(r) * r.images for r in reports) / images if images else 0.0

    phases = sorted({phase for r in reports for phase in r.phase_ms})
    return EvalReport(
        images=images,
        targets=sum(r.targets for r in reports),
        detected_targets=sum(r.detected_targets for r in reports),
        false_detections=sum(r.false_detections for r in reports),
        detections=sum(r.detections for r in reports),
        mean_ms_per_image=weighted(lambda r: r.mean_ms_per_image),
        mean_decode_ms=weighted(lambda r: r.mean_decode_ms),
        phase_ms={p: weighted(lambda r, p=p: r.phase_ms.get(p, 0.0)) for p in phases},
        config=dict(reports[0].config) if reports else {},
        errors=[e for r in reports for e in r.errors],
        name=name,
    )


def config_echo(model: LinearModel, params: DetectParams) -> Dict[str, str]:
    """Every setting that influenced a report, as text."""
    echo = dict(model.config.to_pairs())
    echo.update(params.to_pairs())
    echo["false_rate_denominator"] = FALSE_RATE_DENOMINATOR
    return echo


# ---------------------------------------------------------------------------
# Running the detector over a dataset
# ---------------------------------------------------------------------------


def _default_loader(images_root: Optional[Union[str, Path]]) -> Loader:
    root = Path(images_root) if images_root is not None else Path(".")
    return lambda image_path: load_image(root / image_path)


def _load(annotation: Annotation, loader: Loader) -> Tuple[Optional[Image], float, Optional[str]]:
    start = time.perf_counter()
    try:
        img = loader(annotation.image_path)
    except (HogscanError, OSError, KeyError) as exc:
        logger.warning("skipping %s: %s", annotation.image_path, exc)
        return None, 0.0, str(exc)
    return img, (time.perf_counter() - start) * 1000.0, None


def _map(fn, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def evaluate(
    dataset: Sequence[Annotation],
    model: LinearModel,
    params: DetectParams,
    images_root: Optional[Union[str, Path]] = None,
    loader: Optional[Loader] = None,
    workers: int = 1,
    name: str = "",
) -> EvalReport:
    """
    Detect on every annotated image and aggregate matches and timing.

    Images that cannot be loaded are recorded as errors and the run continues.
    Decode time is measured separately from the detection pipeline.
    """
    loader = loader or _default_loader(images_root)

    def run_one(annotation: Annotation) -> ImageResult:
        img, decode_ms, error = _load(annotation, loader)
        if error is not None:
            return ImageResult(image_path=annotation.image_path, error=error)
        timer = PhaseTimer()
        start = time.perf_counter()
        detections = detect(img, model, params, timer=timer)
        total_ms = (time.perf_counter() - start) * 1000.0
        matched, false = match_detections(detections, annotation.targets)
        logger.debug("%s: %d/%d targets, %d false", annotation.image_path, matched, len(annotation.targets), false)
        return ImageResult(
            image_path=annotation.image_path,
            targets=len(annotation.targets),
            detected=matched,
            false_detections=false,
            detections=len(detections),
            total_ms=total_ms,
            decode_ms=decode_ms,
            phase_ms=dict(timer.totals),
        )

    results = _map(run_one, list(dataset), workers)
    return aggregate(results, config_echo(model, params), name=name)


def evaluate_thresholds(
    dataset: Sequence[Annotation],
    model: LinearModel,
    params: DetectParams,
    taus: Sequence[float],
    images_root: Optional[Union[str, Path]] = None,
    loader: Optional[Loader] = None,
    workers: int = 1,
) -> List[EvalReport]:
    """
    One report per threshold from a single scan per image.

    Each image is scanned once at the lowest threshold without suppression;
    every threshold then keeps the hits at or above it and applies NMS. The
    hit sets are nested, so this equals running detect per threshold.
    """
    if not taus:
        raise ParameterError("taus: need at least one threshold")
    loader = loader or _default_loader(images_root)
    raw_params = replace(params, tau=min(taus), nms_enabled=False)

    def run_one(annotation: Annotation) -> List[ImageResult]:
        img, decode_ms, error = _load(annotation, loader)
        if error is not None:
            return [ImageResult(image_path=annotation.image_path, error=error) for _ in taus]
        start = time.perf_counter()
        raw = detect(img, model, raw_params)
        scan_ms = (time.perf_counter() - start) * 1000.0
        rows = []
        for tau in taus:
            kept = [d for d in raw if d.score >= tau]
            if params.nms_enabled:
                kept = nms(kept, params.nms_overlap)
            matched, false = match_detections(kept, annotation.targets)
            rows.append(
                ImageResult(
                    image_path=annotation.image_path,
                    targets=len(annotation.targets),
                    detected=matched,
                    false_detections=false,
                    detections=len(kept),
                    total_ms=scan_ms,
                    decode_ms=decode_ms,
                )
            )
        return rows

    per_image = _map(run_one, list(dataset), workers)
    reports = []
    for column, tau in enumerate(taus):
        echo = config_echo(model, replace(params, tau=tau))
        reports.append(aggregate([rows[column] for rows in per_image], echo, name=kv.format_float(tau)))
    return reports


def tune_threshold(
    dataset: Sequence[Annotation],
    model: LinearModel,
    params: DetectParams,
    taus: Sequence[float],
    **kwargs,
) -> Tuple[float, List[EvalReport]]:
    """Pick the threshold with the most detected-minus-false targets; ties go to the higher threshold."""
    reports = evaluate_thresholds(dataset, model, params, taus, **kwargs)
    best = max(range(len(taus)), key=lambda i: (reports[i].detected_targets - reports[i].false_detections, taus[i]))
    return taus[best], reports


def time_phases(img: Image, model: LinearModel, params: DetectParams, repeats: int = 5) -> Dict[str, float]:
    """
    Median wall-clock milliseconds per detection phase over repeated runs.

    The result also carries ``total``, the median end-to-end detect time.
    """
    if repeats < 1:
        raise ParameterError(f"repeats: must be >= 1, got {repeats}")
    samples: Dict[str, List[float]] = {phase: [] for phase in PhaseTimer.PHASES}
    samples["total"] = []
    for _ in range(repeats):
        timer = PhaseTimer()
        start = time.perf_counter()
        detect(img, model, params, timer=timer)
        samples["total"].append((time.perf_counter() - start) * 1000.0)
        for phase, ms in timer.totals.items():
            samples[phase].append(ms)
    return {phase: statistics.median(values) for phase, values in samples.items()}


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    value: str
    report: Optional[EvalReport] = None
    error: Optional[str] = None


@dataclass
class SweepTable:
    """One evaluation row per swept value."""

    axis: str
    rows: List[SweepRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [self.axis, "detected", "detected_pct", "false_positives", "false_pct", "detections", "mean_ms", "error"]
        )
        for row in self.rows:
            r = row.report
            if r is None:
                writer.writerow([row.value, "", "", "", "", "", "", row.error or ""])
                continue
            writer.writerow(
                [
                    row.value,
                    r.detected_targets,
                    percent(r.detection_rate),
                    r.false_detections,
                    percent(r.false_rate),
                    r.detections,
                    f"{r.mean_ms_per_image:.3f}",
                    "",
                ]
            )
        return buffer.getvalue()


def parse_axis_value(axis: str, text: str):
    """Typed value of one sweep entry."""
    if axis == "gamma":
        return kv.parse_optional_float("gamma", text)
    if axis == "filter":
        return GradientFilter.parse(text)
    if axis in ("cell_size", "block_size"):
        return kv.parse_int(axis, text)
    if axis == "threshold":
        return kv.parse_float("threshold", text)
    raise ParameterError(f"axis: expected one of {', '.join(AXES)}, got {axis!r}")


def config_for_axis(base: HogConfig, axis: str, value) -> HogConfig:
    """
    Geometry used for one sweep row.

    A new cell size keeps the base cell counts, so window, block and block
    stride scale with the cell; a new block size changes the block only.
    """
    if axis == "gamma":
        return base.with_changes(gamma=value)
    if axis == "filter":
        return base.with_changes(gradient_filter=value)
    if axis == "block_size":
        return base.with_changes(block_size=value)
    if axis == "cell_size":
        c = base.cell_size
        for name in ("window_width", "window_height", "block_stride"):
            if getattr(base, name) % c:
                raise ConfigError(f"{name}: {getattr(base, name)} is not a multiple of base cell_size {c}")
        return base.with_changes(
            cell_size=value,
            block_size=base.cells_per_block * value,
            block_stride=base.block_stride // c * value,
            window_width=base.window_width // c * value,
            window_height=base.window_height // c * value,
        )
    if axis == "threshold":
        return base
    raise ParameterError(f"axis: expected one of {', '.join(AXES)}, got {axis!r}")


def sweep(
    dataset: Sequence[Annotation],
    base: HogConfig,
    axis: str,
    values: Sequence[str],
    detect_params: DetectParams,
    train_params: Optional[TrainParams] = None,
    model: Optional[LinearModel] = None,
    training: Optional[TrainingSet] = None,
    images_root: Optional[Union[str, Path]] = None,
    loader: Optional[Loader] = None,
    workers: int = 1,
) -> SweepTable:
    """
    Evaluate one report per axis value.

    The threshold axis reuses model; every other axis retrains from training
    under the row's configuration with the same seed. A value that fails
    validation or training becomes an error row and the sweep moves on.
    """
    if axis not in AXES:
        raise ParameterError(f"axis: expected one of {', '.join(AXES)}, got {axis!r}")
    train_params = train_params or TrainParams()
    table = SweepTable(axis=axis)
    for text in values:
        try:
            value = parse_axis_value(axis, text)
            if axis == "threshold":
                if model is None:
                    raise ParameterError("threshold axis needs a trained model")
                row_model, row_params = model, replace(detect_params, tau=value)
            else:
                if training is None:
                    raise ParameterError(f"{axis} axis needs a training set to retrain from")
                config = config_for_axis(base, axis, value)
                row_model, row_params = fit(training, config, train_params), detect_params
            report = evaluate(
                dataset, row_model, row_params, images_root=images_root, loader=loader, workers=workers, name=text
            )
            table.rows.append(SweepRow(value=text, report=report))
        except HogscanError as exc:
            logger.warning("%s=%s: %s", axis, text, exc)
            table.rows.append(SweepRow(value=text, error=str(exc)))
    return table
