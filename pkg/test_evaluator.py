"""Tests for detection matching, per-class scores and tracking reports"""

import itertools
import json

import numpy as np
import pytest

from synthlabel.evaluator import (Box, Detection, EvalReport, TruthOutcome, evaluate,
                                  evaluate_dataset, format_report, group_map, iou, map_per_class,
                                  match_detections, parse_predictions, read_prediction_sequence,
                                  report_to_dict, best_detection, tracking_report)
from synthlabel.exceptions import EmptyInputError, MalformedLineError, OutOfRangeError
from synthlabel.labels import ClassMap, LabelFile, LabelRecord, write_label_file


def _pixel_iou(a, b):
    """IoU by counting integer grid cells"""
    grid_a = np.zeros((64, 64), dtype=bool)
    grid_b = np.zeros((64, 64), dtype=bool)
    grid_a[int(a.y_min):int(a.y_max), int(a.x_min):int(a.x_max)] = True
    grid_b[int(b.y_min):int(b.y_max), int(b.x_min):int(b.x_max)] = True
    return np.count_nonzero(grid_a & grid_b) / np.count_nonzero(grid_a | grid_b)


# IoU

def test_iou_identical():
    assert iou(Box(1, 2, 5, 9), Box(1, 2, 5, 9)) == 1.0


def test_iou_disjoint():
    assert iou(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0


def test_iou_partial_overlap():
    assert iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(25 / 175)


def test_iou_matches_pixel_count():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b = [Box(*(int(v) for v in (x, y, x + w, y + h)))
                for x, y, w, h in rng.integers([0, 0, 1, 1], [40, 40, 24, 24], size=(2, 4))]
        assert iou(a, b) == pytest.approx(_pixel_iou(a, b))


def test_iou_is_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    for _ in range(10000):
        coords = rng.uniform(0, 50, size=(2, 2, 2))
        a = Box(*coords[0].min(axis=0), *coords[0].max(axis=0))
        b = Box(*coords[1].min(axis=0), *coords[1].max(axis=0))
        assert iou(a, b) == pytest.approx(iou(b, a))
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == pytest.approx(1.0)


# Matching

def test_perfect_predictions_are_correct():
    truths = [(0, Box(0, 0, 10, 10)), (1, Box(20, 20, 30, 30))]
    preds = [Detection(c, b, 0.9) for c, b in truths]
    result = match_detections(preds, truths)
    assert result.truth_outcomes == [TruthOutcome.CORRECT, TruthOutcome.CORRECT]
    assert result.pred_matched == [True, True]


def test_duplicate_prediction_stays_unmatched():
    truths = [(0, Box(0, 0, 10, 10))]
    preds = [Detection(0, Box(0, 0, 10, 9), 0.6), Detection(0, Box(0, 0, 10, 10), 0.4)]
    result = match_detections(preds, truths)
    assert result.truth_outcomes == [TruthOutcome.CORRECT]
    assert result.pred_matched == [False, True]


def test_equal_overlap_goes_to_more_confident():
    truths = [(0, Box(0, 0, 10, 10))]
    preds = [Detection(0, Box(0, 0, 10, 10), 0.3), Detection(0, Box(0, 0, 10, 10), 0.8)]
    assert match_detections(preds, truths).pred_matched == [False, True]


def test_other_class_overlap_is_wrong():
    truths = [(0, Box(0, 0, 10, 10))]
    preds = [Detection(1, Box(0, 0, 10, 8), 0.9)]
    assert match_detections(preds, truths).truth_outcomes == [TruthOutcome.WRONG]


def test_low_overlap_is_missed():
    truths = [(0, Box(0, 0, 10, 10))]
    preds = [Detection(0, Box(6, 0, 16, 10)), Detection(1, Box(6, 0, 16, 10))]
    result = match_detections(preds, truths)
    assert result.truth_outcomes == [TruthOutcome.MISSED]
    assert result.pred_matched == [False, False]


def _best_assignment(preds, truths, threshold):
    """Most correct truths over every one-to-one assignment"""
    eligible = [[p.class_id == c and iou(p.box, b) >= threshold for c, b in truths] for p in preds]
    best = 0
    slots = list(range(len(truths))) + [None] * len(preds)
    for choice in itertools.permutations(slots, len(preds)):
        best = max(best, sum(1 for pi, ti in enumerate(choice) if ti is not None and eligible[pi][ti]))
    return best


def test_matching_is_optimal_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        truths = []
        for _ in range(int(rng.integers(1, 5))):
            x, y = (int(v) for v in rng.integers(0, 24, size=2))
            truths.append((int(rng.integers(0, 2)), Box(x, y, x + 10, y + 10)))
        preds = []
        for _ in range(int(rng.integers(0, 5))):
            _, box = truths[int(rng.integers(len(truths)))]
            dx, dy = (int(v) for v in rng.integers(-4, 5, size=2))
            preds.append(Detection(int(rng.integers(0, 2)),
                                   Box(box.x_min + dx, box.y_min + dy, box.x_max + dx, box.y_max + dy),
                                   float(rng.uniform())))
        result = match_detections(preds, truths)
        correct = result.truth_outcomes.count(TruthOutcome.CORRECT)
        assert correct == _best_assignment(preds, truths, 0.5)
        assert correct == sum(result.pred_matched) == len(result.matches)
        assert len({ti for _, ti, _ in result.matches}) == len(result.matches)


def test_overlapping_truths_both_matched():
    truths = [(0, Box(0, 0, 10, 10)), (0, Box(3, 0, 13, 10))]
    preds = [Detection(0, Box(1, 0, 11, 10)), Detection(0, Box(-1, 0, 9, 10))]
    result = match_detections(preds, truths)
    assert result.truth_outcomes == [TruthOutcome.CORRECT, TruthOutcome.CORRECT]
    assert sorted((pi, ti) for pi, ti, _ in result.matches) == [(0, 1), (1, 0)]


def test_matched_prediction_does_not_make_other_truth_wrong():
    truths = [(0, Box(0, 0, 10, 10)), (1, Box(0, 0, 10, 10))]
    preds = [Detection(1, Box(0, 0, 10, 10))]
    assert match_detections(preds, truths).truth_outcomes == [TruthOutcome.MISSED, TruthOutcome.CORRECT]

    preds.append(Detection(2, Box(0, 1, 10, 10)))
    assert match_detections(preds, truths).truth_outcomes == [TruthOutcome.WRONG, TruthOutcome.CORRECT]


# Scores

def test_three_of_four_correct():
    outcomes = [(0, TruthOutcome.CORRECT)] * 3 + [(0, TruthOutcome.MISSED)]
    report = map_per_class(outcomes)
    assert report.classes[0].map == 0.75


def test_all_correct_scores_one_per_class():
    outcomes = [(0, TruthOutcome.CORRECT), (2, TruthOutcome.CORRECT)]
    report = map_per_class(outcomes)
    assert {c: s.map for c, s in report.classes.items()} == {0: 1.0, 2: 1.0}


def test_absent_class_not_reported():
    report = map_per_class([(1, TruthOutcome.WRONG)], totals={1: 2, 5: 0})
    assert list(report.classes) == [1]
    assert (report.classes[1].wrong, report.classes[1].missed, report.classes[1].total) == (1, 1, 2)


def test_totals_must_cover_outcomes():
    with pytest.raises(ValueError):
        map_per_class([(0, TruthOutcome.CORRECT)] * 2, totals={0: 1})


def test_outcomes_add_up_on_fuzzed_images():
    rng = np.random.default_rng(6)
    results = []
    for _ in range(100):
        truths = [(int(rng.integers(0, 3)), Box(x, 0, x + 10, 10)) for x in range(0, 60, 15)]
        preds = [Detection(int(rng.integers(0, 3)), Box(x + int(rng.integers(-4, 5)), 0,
                                                         x + 10 + int(rng.integers(-4, 5)), 10))
                 for x in range(0, 60, 15) if rng.uniform() < 0.7]
        results.append(match_detections(preds, truths))
    report = evaluate(results)
    assert report.images == 100
    for stats in report.classes.values():
        assert stats.correct + stats.wrong + stats.missed == stats.total
    assert sum(s.total for s in report.classes.values()) == 400


def test_shifted_predictions_score_zero():
    truths = [(0, Box(0, 0, 10, 10)), (0, Box(30, 0, 40, 10))]
    preds = [Detection(0, Box(b.x_min + 6, 0, b.x_max + 6, 10)) for _, b in truths]
    report = evaluate([match_detections(preds, truths)])
    assert report.classes[0].map == 0.0


def test_group_and_overall_scores_are_weighted():
    report = map_per_class([(0, TruthOutcome.CORRECT)] * 1 + [(1, TruthOutcome.CORRECT)] * 3
                           + [(1, TruthOutcome.MISSED)] * 1 + [(2, TruthOutcome.MISSED)] * 5)
    assert group_map(report, [0, 1]) == pytest.approx(4 / 5)
    assert report.overall_map == pytest.approx(4 / 10)
    assert group_map(report, [7]) is None
    assert EvalReport().overall_map is None


# Prediction files

def test_parse_predictions_to_pixels():
    (det,) = parse_predictions("3 0.75 0.5 0.5 0.2 0.4\n", 100, 50)
    assert det.class_id == 3 and det.confidence == 0.75
    assert (det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max) == pytest.approx((40, 15, 60, 35))


def test_parse_predictions_errors():
    with pytest.raises(MalformedLineError):
        parse_predictions("0 0.5 0.5 0.5 0.1")
    with pytest.raises(OutOfRangeError):
        parse_predictions("0 1.5 0.5 0.5 0.1 0.1")


def test_evaluate_dataset(tmp_path, write_png):
    truth_dir, pred_dir = tmp_path / "truth", tmp_path / "pred"
    write_png(truth_dir / "a.png", np.zeros((50, 100, 3), dtype=np.uint8))
    write_png(truth_dir / "b.png", np.zeros((50, 100, 3), dtype=np.uint8))
    write_label_file(truth_dir / "a.txt", LabelFile([LabelRecord(0, 0.25, 0.5, 0.2, 0.4),
                                                     LabelRecord(1, 0.75, 0.5, 0.2, 0.4)]))
    write_label_file(truth_dir / "b.txt", LabelFile([LabelRecord(1, 0.5, 0.5, 0.2, 0.2)]))
    pred_dir.mkdir()
    (pred_dir / "a.txt").write_text("0 0.9 0.25 0.5 0.2 0.4\n1 0.8 0.10 0.1 0.1 0.1\n")

    report = evaluate_dataset(truth_dir, pred_dir)

    assert report.images == 2
    assert (report.classes[0].correct, report.classes[0].total) == (1, 1)
    assert (report.classes[1].correct, report.classes[1].missed) == (0, 2)
    assert report.overall_map == pytest.approx(1 / 3)


def test_evaluate_dataset_needs_labels(tmp_path):
    (tmp_path / "truth").mkdir()
    (tmp_path / "pred").mkdir()
    with pytest.raises(EmptyInputError):
        evaluate_dataset(tmp_path / "truth", tmp_path / "pred")


def test_report_rendering():
    report = map_per_class([(0, TruthOutcome.CORRECT), (1, TruthOutcome.MISSED)])
    text = format_report(report, ClassMap.from_names(["tower", "minion"]), {"all": [0, 1]})
    assert "tower" in text and "minion" in text
    assert "0.50" in text
    document = json.loads(json.dumps(report_to_dict(report, {"all": [0, 1]})))
    assert document["classes"]["0"]["map"] == 1.0
    assert document["groups"]["all"] == 0.5
    assert document["overall_map"] == 0.5


# Tracking

def _frames(counts, target=4):
    return [[Detection(target, Box(0, 0, 1, 1), 0.9)] * n + [Detection(target + 1, Box(0, 0, 1, 1))]
            for n in counts]


def test_tracking_percentages():
    report = tracking_report(_frames([1, 1, 0, 2]), 4)
    assert (report.pct_single, report.pct_none, report.pct_multiple) == (50.0, 25.0, 25.0)


def test_tracking_all_single():
    report = tracking_report(_frames([1] * 7), 4)
    assert (report.pct_single, report.pct_multiple, report.pct_none) == (100.0, 0.0, 0.0)


def test_tracking_without_frames():
    with pytest.raises(EmptyInputError):
        tracking_report([], 0)


def test_tracking_percentages_sum_to_100():
    rng = np.random.default_rng(8)
    for _ in range(100):
        counts = rng.integers(0, 4, size=int(rng.integers(1, 40)))
        report = tracking_report(_frames(counts), 4)
        assert report.pct_single + report.pct_multiple + report.pct_none == pytest.approx(100.0, abs=1e-9)


def test_tracking_confidence_floor():
    frame = [Detection(0, Box(0, 0, 1, 1), 0.9), Detection(0, Box(0, 0, 1, 1), 0.2)]
    assert tracking_report([frame], 0).multiple == 1
    assert tracking_report([frame], 0, min_confidence=0.5).single == 1


def test_best_detection():
    detections = [Detection(0, Box(0, 0, 1, 1), 0.4), Detection(0, Box(1, 1, 2, 2), 0.7),
                  Detection(1, Box(0, 0, 1, 1), 0.99)]
    assert best_detection(detections, 0).confidence == 0.7
    assert best_detection(detections, 5) is None


def test_read_prediction_sequence(tmp_path):
    (tmp_path / "f1.txt").write_text("0 0.5 0.5 0.5 0.2 0.2\n")
    (tmp_path / "f0.txt").write_text("")
    frames = read_prediction_sequence(tmp_path)
    assert [len(f) for f in frames] == [0, 1]


def test_read_prediction_sequence_rejects_binary_file(tmp_path):
    (tmp_path / "f0.txt").write_bytes(b"0 0.9 0.5 0.5 0.2 0.2\n\xff\xfe\n")
    with pytest.raises(MalformedLineError) as excinfo:
        read_prediction_sequence(tmp_path)
    assert excinfo.value.line_no == 2
    assert "f0.txt" in str(excinfo.value)


def test_iou_is_scale_invariant():
    rng = np.random.default_rng(9)
    for _ in range(100):
        x, y = rng.uniform(0, 20, size=2)
        a = Box(x, y, x + rng.uniform(1, 10), y + rng.uniform(1, 10))
        b = Box(x + 2, y + 1, x + 2 + rng.uniform(1, 10), y + 1 + rng.uniform(1, 10))
        s = float(rng.uniform(0.1, 10))
        scaled = [Box(v.x_min * s, v.y_min * s, v.x_max * s, v.y_max * s) for v in (a, b)]
        assert iou(*scaled) == pytest.approx(iou(a, b), abs=1e-12)
