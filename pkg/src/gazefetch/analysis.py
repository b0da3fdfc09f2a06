"""Measurement computations over recorded sessions.

Two batch analyses: per-trial gaze accuracy against a fixated target box
(distance distribution, threshold fractions, heatmap), and whole-session
effectiveness (completion time, request counts, error rate).
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .assembly import AssemblyPlan
from .gaze import GazeSample
from .orchestrator import (
    LOG_ANNOUNCEMENT,
    LOG_ASSEMBLY_MARK,
    LOG_INTENT,
    LOG_SESSION_START,
    AnnouncementKind,
    EventLogRecord,
)
from .perception import BBox, bbox_center


class InputError(ValueError):
    """Analysis input is unusable (too short, missing marks)."""


@dataclass
class GazeAccuracyReport:
    """Distance statistics of one fixation trial against its target box."""

    n_used: int
    distances: list[float]
    median_px: float
    iqr_px: float
    x_bound: float
    y_bound: float
    max_corner: float
    frac_within_x_bound: float
    frac_within_y_bound: float
    frac_within_max_corner: float
    heatmap: list[list[int]]
    grid_n: int
    frame_width: int
    frame_height: int

    def to_dict(self) -> dict:
        return {
            "n_used": self.n_used,
            "distances": self.distances,
            "median_px": self.median_px,
            "iqr_px": self.iqr_px,
            "x_bound": self.x_bound,
            "y_bound": self.y_bound,
            "max_corner": self.max_corner,
            "frac_within_x_bound": self.frac_within_x_bound,
            "frac_within_y_bound": self.frac_within_y_bound,
            "frac_within_max_corner": self.frac_within_max_corner,
            "heatmap": self.heatmap,
            "grid_n": self.grid_n,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GazeAccuracyReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


DEFAULT_DISCARD = 10
DEFAULT_GRID = 64


def gaze_accuracy(
    trace: Sequence[GazeSample],
    target: BBox,
    discard_n: int = DEFAULT_DISCARD,
    grid_n: int = DEFAULT_GRID,
    frame_width: int = 1920,
    frame_height: int = 1080,
) -> GazeAccuracyReport:
    """Score a fixation trial against the target's box.

    The first ``discard_n`` samples are dropped to remove transient effects
    (the saccade toward the target); invalid samples are excluded as in the
    live pipeline. Thresholds derive from the box: half-width, half-height,
    and the center-to-farthest-corner distance.
    """
    if len(trace) <= discard_n:
        raise InputError(
            f"trace has {len(trace)} samples; need more than discard_n={discard_n}"
        )
    used = [s for s in trace[discard_n:] if s.valid]
    if not used:
        raise InputError("no valid samples remain after discarding")

    cx, cy = bbox_center(target)
    x_bound = (target.x_max - target.x_min) / 2.0
    y_bound = (target.y_max - target.y_min) / 2.0
    max_corner = math.hypot(x_bound, y_bound)

    distances = [math.hypot(s.x - cx, s.y - cy) for s in used]
    n = len(used)
    within_x = sum(1 for s in used if abs(s.x - cx) <= x_bound)
    within_y = sum(1 for s in used if abs(s.y - cy) <= y_bound)
    within_corner = sum(1 for d in distances if d <= max_corner)

    quartiles = statistics.quantiles(distances, n=4, method="inclusive") if n > 1 else [
        distances[0],
        distances[0],
        distances[0],
    ]

    heatmap = [[0] * grid_n for _ in range(grid_n)]
    for s in used:
        col = min(grid_n - 1, max(0, int(s.x / frame_width * grid_n)))
        row = min(grid_n - 1, max(0, int(s.y / frame_height * grid_n)))
        heatmap[row][col] += 1

    return GazeAccuracyReport(
        n_used=n,
        distances=distances,
        median_px=statistics.median(distances),
        iqr_px=quartiles[2] - quartiles[0],
        x_bound=x_bound,
        y_bound=y_bound,
        max_corner=max_corner,
        frac_within_x_bound=within_x / n,
        frac_within_y_bound=within_y / n,
        frac_within_max_corner=within_corner / n,
        heatmap=heatmap,
        grid_n=grid_n,
        frame_width=frame_width,
        frame_height=frame_height,
    )


@dataclass
class SessionMetrics:
    """Task effectiveness for one session."""

    completion_time_s: float
    requests_total: int
    requests_incorrect: int
    error_rate: float
    partial: bool = False
    annotated: bool = True

    def to_dict(self) -> dict:
        return {
            "completion_time_s": self.completion_time_s,
            "requests_total": self.requests_total,
            "requests_incorrect": self.requests_incorrect,
            "error_rate": self.error_rate,
            "partial": self.partial,
            "annotated": self.annotated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionMetrics":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def session_metrics(
    log: Iterable[EventLogRecord],
    plan: AssemblyPlan,
    intended_labels: Optional[Sequence[str]] = None,
) -> SessionMetrics:
    """Compute completion time and the selection error rate from a session log.

    A selection is the Nth SELECTED announcement; it is incorrect when its
    label differs from the Nth intended label in the annotation channel.
    Without annotations the error count is reported as zero and the metrics
    flagged unannotated (live runs can be annotated post hoc).
    """
    records = list(log)
    start_us: Optional[int] = None
    last_mark_us: Optional[int] = None
    last_intent_label: Optional[str] = None
    selected: list[str] = []
    assembled_steps: set[str] = set()

    for record in records:
        if record.kind == LOG_SESSION_START and start_us is None:
            start_us = record.timestamp_us
        elif record.kind == LOG_INTENT:
            last_intent_label = record.payload.get("label")
        elif record.kind == LOG_ANNOUNCEMENT:
            if record.payload.get("kind") == AnnouncementKind.SELECTED.value:
                if last_intent_label is not None:
                    selected.append(last_intent_label)
                else:
                    # Logs without intent records: fall back to the template,
                    # "Object X selected; Bringing now".
                    text = record.payload.get("text", "")
                    selected.append(text.removeprefix("Object ").split(" selected")[0])
        elif record.kind == LOG_ASSEMBLY_MARK:
            last_mark_us = record.timestamp_us
            assembled_steps.add(record.payload.get("step_id"))

    if start_us is None:
        raise InputError("log has no session-start mark")

    robot_steps = set(plan.robot_step_ids())
    partial = not robot_steps <= assembled_steps
    end_us = last_mark_us if last_mark_us is not None else start_us
    completion_s = (end_us - start_us) / 1_000_000.0

    total = len(selected)
    if intended_labels is None:
        incorrect = 0
        annotated = False
    else:
        annotated = True
        incorrect = sum(
            1
            for i, label in enumerate(selected)
            if i >= len(intended_labels) or label != intended_labels[i]
        )
    return SessionMetrics(
        completion_time_s=completion_s,
        requests_total=total,
        requests_incorrect=incorrect,
        error_rate=(incorrect / total) if total else 0.0,
        partial=partial,
        annotated=annotated,
    )


# Stable column orders for CSV export; JSONL carries every field.
SESSION_CSV_COLUMNS = [
    "completion_time_s",
    "requests_total",
    "requests_incorrect",
    "error_rate",
    "partial",
    "annotated",
]
ACCURACY_CSV_COLUMNS = [
    "n_used",
    "median_px",
    "iqr_px",
    "x_bound",
    "y_bound",
    "max_corner",
    "frac_within_x_bound",
    "frac_within_y_bound",
    "frac_within_max_corner",
    "grid_n",
    "frame_width",
    "frame_height",
]


def export_report(report: GazeAccuracyReport | SessionMetrics, fmt: str = "jsonl") -> str:
    """Serialize a report; JSONL is lossless, CSV carries the summary columns."""
    fmt = fmt.lower()
    if fmt == "jsonl":
        return json.dumps(report.to_dict(), separators=(",", ":")) + "\n"
    if fmt == "csv":
        columns = (
            SESSION_CSV_COLUMNS
            if isinstance(report, SessionMetrics)
            else ACCURACY_CSV_COLUMNS
        )
        data = report.to_dict()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerow([data[c] for c in columns])
        return buf.getvalue()
    raise ValueError(f"unknown export format {fmt!r}")


def parse_report_jsonl(text: str) -> GazeAccuracyReport | SessionMetrics:
    data = json.loads(text.strip().splitlines()[0])
    if "heatmap" in data:
        return GazeAccuracyReport.from_dict(data)
    return SessionMetrics.from_dict(data)
