import math
import random

import pytest

from gazefetch.analysis import (
    ACCURACY_CSV_COLUMNS,
    SESSION_CSV_COLUMNS,
    GazeAccuracyReport,
    InputError,
    SessionMetrics,
    export_report,
    gaze_accuracy,
    parse_report_jsonl,
    session_metrics,
)
from gazefetch.assembly import builtin_plan
from gazefetch.gaze import GazeSample
from gazefetch.orchestrator import EventLog, EventLogRecord
from gazefetch.perception import BBox


def samples_at(x, y, n, start_t=0):
    return [GazeSample(start_t + i, x, y, True) for i in range(n)]


def gaussian_samples(cx, cy, sigma, n, seed=0):
    rng = random.Random(seed)
    return [
        GazeSample(i, cx + rng.gauss(0, sigma), cy + rng.gauss(0, sigma), True)
        for i in range(n)
    ]


CENTER_BOX = BBox("target", 920, 500, 1000, 580)  # 80x80 centered at (960, 540)


class TestGazeAccuracy:
    def test_perfect_fixation(self):
        report = gaze_accuracy(samples_at(960, 540, 50), CENTER_BOX)
        assert report.n_used == 40  # 10 discarded
        assert all(d == 0.0 for d in report.distances)
        assert report.median_px == 0.0
        assert report.frac_within_x_bound == 1.0
        assert report.frac_within_y_bound == 1.0
        assert report.frac_within_max_corner == 1.0

    def test_threshold_geometry_345(self):
        box = BBox("t", 0, 0, 80, 60)
        report = gaze_accuracy(samples_at(40, 30, 20), box)
        assert report.x_bound == 40.0
        assert report.y_bound == 30.0
        assert report.max_corner == 50.0

    def test_max_corner_is_euclidean_combination_exactly(self):
        rng = random.Random(1)
        for _ in range(50):
            x0, y0 = rng.uniform(0, 500), rng.uniform(0, 500)
            w, h = rng.uniform(1, 300), rng.uniform(1, 300)
            box = BBox("t", x0, y0, x0 + w, y0 + h)
            report = gaze_accuracy(samples_at(x0 + w / 2, y0 + h / 2, 20), box)
            assert report.max_corner**2 == pytest.approx(
                report.x_bound**2 + report.y_bound**2, rel=1e-12
            )

    def test_gaussian_fraction_matches_rayleigh_cdf(self):
        # Distance of an isotropic Gaussian from center is Rayleigh: the
        # in-circle fraction at radius r is 1 - exp(-r^2 / (2 sigma^2)).
        sigma = 10.0
        trace = gaussian_samples(960, 540, sigma, 10_010, seed=7)
        report = gaze_accuracy(trace, CENTER_BOX)
        r = report.max_corner
        expected = 1.0 - math.exp(-(r**2) / (2 * sigma**2))
        assert report.frac_within_max_corner == pytest.approx(expected, abs=0.01)

    def test_discard_rule_prepending_junk_changes_nothing(self):
        trace = gaussian_samples(960, 540, 10.0, 500, seed=3)
        junk = [GazeSample(-10_000 + i, 5.0, 5.0, True) for i in range(10)]
        base = gaze_accuracy(trace, CENTER_BOX, discard_n=0)
        padded = gaze_accuracy(junk + trace, CENTER_BOX, discard_n=10)
        assert padded.to_dict() == base.to_dict()

    def test_invalid_samples_excluded(self):
        trace = samples_at(960, 540, 30)
        trace += [GazeSample(100 + i, 0.0, 0.0, False) for i in range(5)]
        report = gaze_accuracy(trace, CENTER_BOX)
        assert report.n_used == 20
        assert report.frac_within_max_corner == 1.0

    def test_heatmap_total_equals_samples_used(self):
        trace = gaussian_samples(960, 540, 25.0, 300, seed=11)
        report = gaze_accuracy(trace, CENTER_BOX)
        assert sum(sum(row) for row in report.heatmap) == report.n_used
        assert len(report.heatmap) == report.grid_n

    def test_in_box_implies_in_corner_circle(self):
        trace = gaussian_samples(960, 540, 40.0, 2000, seed=5)
        report = gaze_accuracy(trace, CENTER_BOX)
        in_box = sum(
            1
            for s in trace[10:]
            if abs(s.x - 960) <= report.x_bound and abs(s.y - 540) <= report.y_bound
        )
        assert report.frac_within_max_corner >= in_box / report.n_used

    def test_trace_too_short(self):
        with pytest.raises(InputError):
            gaze_accuracy(samples_at(0, 0, 10), CENTER_BOX, discard_n=10)


def build_log(selected_labels, marks_s, start_s=0.0, plan=None):
    log = EventLog()
    log.append(int(start_s * 1e6), "session_start", {"plan_id": "gear_assembly"})
    for i, label in enumerate(selected_labels):
        log.append(
            int((start_s + 1 + i) * 1e6),
            "announcement",
            {
                "kind": "SELECTED",
                "text": f"Object {label} selected; Bringing now",
                "timestamp_us": int((start_s + 1 + i) * 1e6),
            },
        )
    plan = plan or builtin_plan("gear_assembly")
    robot_ids = list(plan.robot_step_ids())
    for i, t in enumerate(marks_s):
        log.append(
            int(t * 1e6),
            "assembly_mark",
            {"label": "x", "step_id": robot_ids[i % len(robot_ids)]},
        )
    return log


class TestSessionMetrics:
    def test_no_errors(self):
        plan = builtin_plan("gear_assembly")
        labels = ["gear_large", "gear_medium", "gear_small", "cap_grey"]
        log = build_log(labels, [10, 20, 30, 40])
        metrics = session_metrics(log, plan, labels)
        assert metrics.requests_total == 4
        assert metrics.requests_incorrect == 0
        assert metrics.error_rate == 0.0
        assert not metrics.partial

    def test_one_in_five_incorrect(self):
        plan = builtin_plan("gear_assembly")
        intended = ["gear_large"] * 5
        actual = ["gear_large"] * 4 + ["cap_grey"]
        log = build_log(actual, [10, 20, 30, 40])
        metrics = session_metrics(log, plan, intended)
        assert metrics.requests_total == 5
        assert metrics.requests_incorrect == 1
        assert metrics.error_rate == pytest.approx(0.2)

    def test_completion_time_from_final_mark(self):
        plan = builtin_plan("gear_assembly")
        log = build_log(["gear_large"], [50, 70, 90, 98])
        metrics = session_metrics(log, plan, ["gear_large"])
        assert metrics.completion_time_s == pytest.approx(98.0)

    def test_partial_flag_when_robot_steps_missing(self):
        plan = builtin_plan("gear_assembly")
        log = build_log(["gear_large"], [10])
        metrics = session_metrics(log, plan, ["gear_large"])
        assert metrics.partial

    def test_missing_session_start_is_input_error(self):
        log = EventLog()
        log.append(0, "announcement", {"kind": "SELECTED", "text": "Object x selected; Bringing now"})
        with pytest.raises(InputError):
            session_metrics(log, builtin_plan("gear_assembly"))

    def test_unannotated_runs_flagged(self):
        plan = builtin_plan("gear_assembly")
        log = build_log(["gear_large"], [10, 20, 30, 40])
        metrics = session_metrics(log, plan, None)
        assert not metrics.annotated
        assert metrics.requests_incorrect == 0

    def test_error_rate_invariant_under_non_intent_reordering(self):
        plan = builtin_plan("gear_assembly")
        labels = ["gear_large", "gear_medium"]
        log = build_log(labels, [10, 20, 30, 40])
        noise = [
            EventLogRecord(5_000_000, "mean_gaze", {"x_mean": 1.0, "y_mean": 2.0, "n": 15, "span_us": 1}),
            EventLogRecord(6_000_000, "robot_phase_change", {"from": "IDLE", "to": "RETRIEVING"}),
        ]
        records = list(log)
        base = session_metrics(records + noise, plan, labels)
        shuffled = [records[0]] + noise[::-1] + records[1:]
        again = session_metrics(shuffled, plan, labels)
        assert base.error_rate == again.error_rate
        assert base.requests_total == again.requests_total


class TestExport:
    def test_jsonl_roundtrip_accuracy(self):
        report = gaze_accuracy(gaussian_samples(960, 540, 10, 100), CENTER_BOX)
        text = export_report(report, "jsonl")
        parsed = parse_report_jsonl(text)
        assert parsed.to_dict() == report.to_dict()

    def test_jsonl_roundtrip_metrics(self):
        metrics = SessionMetrics(98.0, 4, 0, 0.0)
        parsed = parse_report_jsonl(export_report(metrics, "jsonl"))
        assert parsed.to_dict() == metrics.to_dict()

    def test_csv_header_matches_documented_schema(self):
        metrics = SessionMetrics(98.0, 4, 0, 0.0)
        lines = export_report(metrics, "csv").splitlines()
        assert lines[0] == ",".join(SESSION_CSV_COLUMNS)
        report = gaze_accuracy(samples_at(960, 540, 20), CENTER_BOX)
        lines = export_report(report, "csv").splitlines()
        assert lines[0] == ",".join(ACCURACY_CSV_COLUMNS)

    def test_all_zero_heatmap_survives_roundtrip(self):
        report = gaze_accuracy(samples_at(960, 540, 20), CENTER_BOX)
        report.heatmap = [[0] * report.grid_n for _ in range(report.grid_n)]
        parsed = parse_report_jsonl(export_report(report, "jsonl"))
        assert all(all(v == 0 for v in row) for row in parsed.heatmap)

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            export_report(SessionMetrics(1, 1, 0, 0.0), "xml")
