"""
Tests for annotations, matching, report aggregation, tuning, timing and sweeps.
"""

from __future__ import annotations

import csv
import io
import json
from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hogscan.detect import Detection, DetectParams, PhaseTimer
from hogscan.errors import AnnotationError, ConfigError, DecodeError, ParameterError
from hogscan.evaluation import (
    Annotation,
    EvalReport,
    ImageResult,
    SweepRow,
    SweepTable,
    aggregate,
    config_for_axis,
    covers_half,
    evaluate,
    evaluate_thresholds,
    format_annotations,
    match_detections,
    merge_reports,
    parse_annotations,
    parse_axis_value,
    percent,
    reports_to_csv,
    sweep,
    time_phases,
    tune_threshold,
)
from hogscan.hog import REALTIME, GradientFilter
from hogscan.raster import GrayImage, encode_pgm
from hogscan.svm import LinearModel, TrainingSet, TrainParams


def _det(box, score=1.0) -> Detection:
    return Detection(*box, score=score, scale=1.0)


def _loader(images):
    def load(path):
        if path not in images:
            raise DecodeError(f"{path}: no such test image")
        return images[path]

    return load


def _optimal_matches(detections, targets) -> int:
    """Largest one-to-one assignment of detections to half-covered targets."""
    owner = {}

    def augment(d, seen):
        for t, target in enumerate(targets):
            if t in seen or not covers_half(detections[d].box, target):
                continue
            seen.add(t)
            if t not in owner or augment(owner[t], seen):
                owner[t] = d
                return True
        return False

    return sum(1 for d in range(len(detections)) if augment(d, set()))


box_strategy = st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20))


class TestPercent:
    @pytest.mark.parametrize(
        "num, den, expected",
        [(4503, 5209, 86), (1012, 1178, 86), (3491, 4031, 87), (1, 8, 13), (0, 5, 0), (5, 5, 100)],
    )
    def test_round_half_up(self, num, den, expected):
        assert percent(num / den) == expected


class TestAnnotations:
    def test_single_box(self):
        [a] = parse_annotations(b"img1.pgm 1 10 20 30 60\n")
        assert a == Annotation("img1.pgm", ((10, 20, 30, 60),))

    def test_no_targets(self):
        [a] = parse_annotations("img2.pgm 0")
        assert a.targets == ()

    def test_arity_error_names_line(self):
        with pytest.raises(AnnotationError) as info:
            parse_annotations("a.pgm 0\n\nimg3.pgm 2 0 0 10 10\n")
        assert info.value.line_number == 3
        assert "line 3" in str(info.value)

    def test_undecodable_bytes_name_line(self):
        with pytest.raises(AnnotationError, match="UTF-8") as info:
            parse_annotations(b"a.pgm 0\nsc\xe9ne.pgm 0\n")
        assert info.value.line_number == 2

    def test_comments_and_blanks(self):
        text = "# dataset\n\na.pgm 1 0 0 4 4\n  # note\nb.pgm 2 0 0 1 1 5 5 2 2\n"
        assert [len(a.targets) for a in parse_annotations(text)] == [1, 2]

    @pytest.mark.parametrize(
        "line", ["a.pgm", "a.pgm x", "a.pgm -1", "a.pgm 1 0 0 four 4", "a.pgm 1 0 0 0 4"]
    )
    def test_malformed(self, line):
        with pytest.raises(AnnotationError):
            parse_annotations(line)

    def test_format_round_trip(self):
        annotations = [Annotation("a.pgm", ((1, 2, 3, 4), (5, 6, 7, 8))), Annotation("b.pgm")]
        text = format_annotations(annotations)
        assert text == "a.pgm 2 1 2 3 4 5 6 7 8\nb.pgm 0\n"
        assert parse_annotations(text) == annotations


class TestMatching:
    def test_exact_box(self):
        assert match_detections([_det((0, 0, 10, 10))], [(0, 0, 10, 10)]) == (1, 0)

    def test_exactly_half_is_not_a_match(self):
        assert match_detections([_det((0, 0, 5, 10))], [(0, 0, 10, 10)]) == (0, 1)
        assert match_detections([_det((0, 0, 6, 10))], [(0, 0, 10, 10)]) == (1, 0)

    def test_two_detections_one_target(self):
        dets = [_det((0, 0, 10, 10), 2.0), _det((1, 1, 10, 10), 1.0)]
        assert match_detections(dets, [(0, 0, 10, 10)]) == (1, 1)

    def test_large_detection_covers_target(self):
        assert match_detections([_det((0, 0, 100, 100))], [(40, 40, 10, 10)]) == (1, 0)

    def test_best_covered_target_is_taken(self):
        targets = [(0, 0, 10, 10), (4, 0, 10, 10)]
        dets = [_det((4, 0, 10, 10), 2.0), _det((0, 0, 10, 10), 1.0)]
        assert match_detections(dets, targets) == (2, 0)

    def test_no_detections(self):
        assert match_detections([], [(0, 0, 5, 5)]) == (0, 0)

    @given(
        dets=st.lists(st.tuples(box_strategy, st.floats(-5, 5)), max_size=5),
        targets=st.lists(box_strategy, max_size=5),
    )
    def test_against_optimal_assignment(self, dets, targets):
        detections = [_det(box, score) for box, score in dets]
        matched, false = match_detections(detections, targets)
        optimal = _optimal_matches(detections, targets)
        assert matched + false == len(detections)
        assert 0 <= matched <= min(optimal, len(targets))
        if len(targets) <= 1 or len(detections) <= 1:
            assert matched == optimal


class TestAggregate:
    def test_merged_detection_rate(self):
        first = aggregate([ImageResult("i", targets=1178, detected=1012)], name="street")
        second = aggregate([ImageResult("c", targets=4031, detected=3491)], name="campus")
        merged = merge_reports([first, second])
        assert (merged.targets, merged.detected_targets) == (5209, 4503)
        assert percent(merged.detection_rate) == 86
        assert [percent(r.detection_rate) for r in (first, second)] == [86, 87]
        assert merged.name == "All"

    def test_sums_and_means(self):
        results = [
            ImageResult("a", 2, detected=1, false_detections=1, detections=2, total_ms=10.0, phase_ms={"scan": 6.0}),
            ImageResult("b", targets=1, detected=1, detections=1, total_ms=20.0, phase_ms={"scan": 8.0}),
        ]
        report = aggregate(results, {"tau": "1.05"}, name="set")
        assert (report.images, report.targets, report.detected_targets) == (2, 3, 2)
        assert report.false_detections == 1
        assert report.mean_ms_per_image == 15.0
        assert report.phase_ms == {"scan": 7.0}
        assert report.false_rate == pytest.approx(1 / 3)
        assert report.config == {"tau": "1.05"}

    def test_errors_are_excluded(self):
        results = [ImageResult("a", targets=4, detected=4), ImageResult("bad", error="truncated")]
        report = aggregate(results)
        assert report.images == 1
        assert report.targets == 4
        assert report.errors == [("bad", "truncated")]

    def test_empty(self):
        report = aggregate([])
        assert (report.images, report.targets, report.detection_rate, report.false_rate) == (0, 0, 0.0, 0.0)

    def test_merge_weights_means_by_images(self):
        a = EvalReport(images=1, mean_ms_per_image=10.0)
        b = EvalReport(images=3, mean_ms_per_image=30.0)
        assert merge_reports([a, b]).mean_ms_per_image == 25.0

    def test_json_and_csv(self):
        report = EvalReport(images=2, targets=10, detected_targets=9, false_detections=1, name="set")
        doc = json.loads(report.to_json())
        assert doc["detection_pct"] == 90
        assert doc["false_pct"] == 10
        assert doc["false_rate_denominator"] == "targets"
        rows = list(csv.reader(io.StringIO(reports_to_csv([report]))))
        assert rows[0] == list(EvalReport.CSV_COLUMNS)
        assert rows[1][:5] == ["set", "2", "10", "9", "90"]


class TestEvaluate:
    def test_empty_dataset(self, make_model, tiny_config):
        report = evaluate([], make_model(tiny_config), DetectParams())
        assert report.images == 0
        assert report.detection_rate == 0.0

    def test_perfect_detector(self, make_gray):
        images = {"a.pgm": make_gray(64, 64), "b.pgm": make_gray(64, 64)}
        truth = {"a.pgm": ((0, 0, 20, 40), (30, 10, 20, 40)), "b.pgm": ((5, 5, 16, 16),)}
        by_image = {id(images[name]): boxes for name, boxes in truth.items()}
        dataset = [Annotation(name, boxes) for name, boxes in truth.items()]
        model = LinearModel(weights=np.zeros(9360), rho=0.0, config=REALTIME)

        def fake_detect(img, model, params, timer=None):
            return [_det(box, 2.0) for box in by_image[id(img)]]

        with patch("hogscan.evaluation.detect", side_effect=fake_detect):
            report = evaluate(dataset, model, DetectParams(), loader=_loader(images))
        assert (report.targets, report.detected_targets, report.false_detections) == (3, 3, 0)
        assert percent(report.detection_rate) == 100

    def test_unreadable_image_is_reported(self, make_gray, make_model, tiny_config):
        dataset = [Annotation("ok.pgm", ((0, 0, 16, 16),)), Annotation("missing.pgm", ((0, 0, 16, 16),))]
        loader = _loader({"ok.pgm": make_gray(32, 32)})
        report = evaluate(dataset, make_model(tiny_config), DetectParams(), loader=loader)
        assert report.images == 1
        assert report.targets == 1
        assert [image for image, _ in report.errors] == ["missing.pgm"]

    def test_reads_from_images_root(self, tmp_path, make_gray, make_model, tiny_config):
        (tmp_path / "a.pgm").write_bytes(encode_pgm(make_gray(32, 32)))
        report = evaluate([Annotation("a.pgm")], make_model(tiny_config), DetectParams(), images_root=tmp_path)
        assert report.images == 1
        assert report.errors == []
        assert set(report.phase_ms) == set(PhaseTimer.PHASES)
        assert report.config["tau"] == "1.05"

    def test_workers_same_counts(self, make_gray, make_model, tiny_config):
        images = {f"{i}.pgm": make_gray(48, 48) for i in range(4)}
        dataset = [Annotation(name, ((8, 8, 16, 16),)) for name in images]
        model = make_model(tiny_config, scale=10.0)
        params = DetectParams(tau=0.5)
        one = evaluate(dataset, model, params, loader=_loader(images))
        many = evaluate(dataset, model, params, loader=_loader(images), workers=3)
        assert (one.detected_targets, one.false_detections, one.detections) == (
            many.detected_targets,
            many.false_detections,
            many.detections,
        )


class TestThresholds:
    def test_single_scan_equals_per_threshold_runs(self, make_gray, make_model, tiny_config):
        images = {f"{i}.pgm": make_gray(48, 40) for i in range(5)}
        dataset = [Annotation(name, ((0, 0, 16, 16), (24, 16, 16, 16))) for name in images]
        model = make_model(tiny_config, scale=10.0)
        params = DetectParams(scale_step=1.3)
        taus = [0.0, 0.5, 1.01, 1.06, 2.0]
        reports = evaluate_thresholds(dataset, model, params, taus, loader=_loader(images))
        for tau, report in zip(taus, reports):
            direct = evaluate(dataset, model, DetectParams(tau=tau, scale_step=1.3), loader=_loader(images))
            assert (report.detected_targets, report.false_detections, report.detections) == (
                direct.detected_targets,
                direct.false_detections,
                direct.detections,
            )
            assert report.config["tau"] == repr(tau)

    def test_needs_thresholds(self, make_model, tiny_config):
        with pytest.raises(ParameterError):
            evaluate_thresholds([], make_model(tiny_config), DetectParams(), [])

    def test_tune_prefers_net_detections(self, make_model, tiny_config):
        reports = [
            EvalReport(targets=10, detected_targets=9, false_detections=5),
            EvalReport(targets=10, detected_targets=8, false_detections=1),
            EvalReport(targets=10, detected_targets=5, false_detections=0),
        ]
        with patch("hogscan.evaluation.evaluate_thresholds", return_value=reports):
            best, got = tune_threshold([], make_model(tiny_config), DetectParams(), [0.5, 1.0, 1.5])
        assert best == 1.0
        assert got is reports

    def test_tune_tie_goes_to_higher_threshold(self, make_model, tiny_config):
        reports = [
            EvalReport(targets=10, detected_targets=9, false_detections=2),
            EvalReport(targets=10, detected_targets=7, false_detections=0),
        ]
        with patch("hogscan.evaluation.evaluate_thresholds", return_value=reports):
            best, _ = tune_threshold([], make_model(tiny_config), DetectParams(), [0.8, 1.2])
        assert best == 1.2


class TestTimePhases:
    def test_phases_account_for_total(self, make_gray, make_model):
        img = make_gray(160, 176)
        phases = time_phases(img, make_model(REALTIME), DetectParams(), repeats=3)
        assert set(phases) == set(PhaseTimer.PHASES) | {"total"}
        parts = sum(ms for phase, ms in phases.items() if phase != "total")
        assert abs(parts - phases["total"]) <= 0.1 * phases["total"] + 0.5

    def test_repeats_must_be_positive(self, make_gray, make_model, tiny_config):
        with pytest.raises(ParameterError):
            time_phases(make_gray(16, 16), make_model(tiny_config), DetectParams(), repeats=0)


class TestSweepGeometry:
    def test_axis_values(self):
        assert parse_axis_value("gamma", "off") is None
        assert parse_axis_value("gamma", "0.5") == 0.5
        assert parse_axis_value("filter", "sobel") is GradientFilter.SOBEL
        assert parse_axis_value("cell_size", "6") == 6
        assert parse_axis_value("threshold", "1.03") == 1.03
        with pytest.raises(ConfigError):
            parse_axis_value("cell_size", "six")
        with pytest.raises(ParameterError):
            parse_axis_value("colour", "red")

    def test_cell_size_keeps_cell_counts(self):
        config = config_for_axis(REALTIME, "cell_size", 6)
        assert (config.window_width, config.window_height) == (48, 96)
        assert (config.cell_size, config.block_size, config.block_stride) == (6, 24, 6)

    def test_block_size_changes_block_only(self):
        config = config_for_axis(REALTIME, "block_size", 16)
        assert config == REALTIME.with_changes(block_size=16)

    def test_invalid_block_size(self):
        with pytest.raises(ConfigError):
            config_for_axis(REALTIME, "block_size", 12)

    def test_threshold_keeps_geometry(self):
        assert config_for_axis(REALTIME, "threshold", 1.02) is REALTIME


class TestSweep:
    @pytest.fixture
    def scenes(self, make_gray):
        images = {f"s{i}.pgm": make_gray(48, 48) for i in range(3)}
        return images, [Annotation(name, ((8, 8, 20, 20),)) for name in images]

    @pytest.fixture
    def training(self, make_gray):
        bright = [GrayImage(np.pad(np.full((8, 8), 240, dtype=np.uint8), 4, constant_values=30)) for _ in range(6)]
        return TrainingSet(positives=bright, negatives=[make_gray(16, 16) for _ in range(6)])

    def test_threshold_axis_is_monotone(self, scenes, make_model, tiny_config):
        images, dataset = scenes
        values = ["1.01", "1.02", "1.03", "1.04", "1.05", "1.06"]
        table = sweep(
            dataset,
            tiny_config,
            "threshold",
            values,
            DetectParams(nms_enabled=False),
            model=make_model(tiny_config, scale=10.0),
            loader=_loader(images),
        )
        counts = [row.report.detections for row in table.rows]
        assert [row.value for row in table.rows] == values
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_gamma_axis_has_two_rows(self, scenes, training, tiny_config):
        images, dataset = scenes
        table = sweep(
            dataset,
            tiny_config,
            "gamma",
            ["off", "0.5"],
            DetectParams(tau=0.0),
            train_params=TrainParams(C=1.0, epochs=3),
            training=training,
            loader=_loader(images),
        )
        assert [row.value for row in table.rows] == ["off", "0.5"]
        assert all(row.error is None and row.report.images == 3 for row in table.rows)
        assert table.rows[0].report.config["gamma"] == "off"
        assert table.rows[1].report.config["gamma"] == "0.5"

    def test_cell_size_axis(self, scenes, training, tiny_config):
        images, dataset = scenes
        values = ["6", "7", "8", "9", "10"]
        table = sweep(
            dataset,
            tiny_config,
            "cell_size",
            values,
            DetectParams(tau=0.0),
            train_params=TrainParams(C=1.0, epochs=2),
            training=training,
            loader=_loader(images),
        )
        assert [row.value for row in table.rows] == values
        assert all(row.error is None for row in table.rows)
        assert [row.report.config["window_width"] for row in table.rows] == ["12", "14", "16", "18", "20"]

    def test_invalid_value_becomes_error_row(self, scenes, training, tiny_config):
        images, dataset = scenes
        table = sweep(
            dataset,
            tiny_config,
            "block_size",
            ["12", "16"],
            DetectParams(),
            train_params=TrainParams(epochs=2),
            training=training,
            loader=_loader(images),
        )
        assert table.rows[0].report is None
        assert "block_size" in table.rows[0].error
        assert table.rows[1].error is None

    def test_threshold_axis_needs_model(self, scenes, tiny_config):
        images, dataset = scenes
        table = sweep(dataset, tiny_config, "threshold", ["1.0"], DetectParams(), loader=_loader(images))
        assert "model" in table.rows[0].error

    def test_unknown_axis(self, tiny_config):
        with pytest.raises(ParameterError, match="axis"):
            sweep([], tiny_config, "colour", ["red"], DetectParams())

    def test_csv(self):
        table = SweepTable(
            axis="gamma",
            rows=[
                SweepRow("0.5", EvalReport(images=1, targets=4, detected_targets=3, false_detections=1)),
                SweepRow("bad", error="gamma: expected a number"),
            ],
        )
        rows = list(csv.reader(io.StringIO(table.to_csv())))
        assert rows[0][0] == "gamma"
        assert rows[0][-1] == "error"
        assert rows[1][:5] == ["0.5", "3", "75", "1", "25"]
        assert rows[2][0] == "bad" and rows[2][-1] == "gamma: expected a number"
