"""Labeled detections and gaze-to-object matching.

Detections are axis-aligned labeled boxes from one of two viewpoints (the
user's scene camera or the robot's camera). Matching a smoothed gaze point
against a box is a four-inequality test with inclusive bounds; resolving a
target picks the most specific (smallest) matching box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .gaze import MeanGaze


class Viewpoint(str, Enum):
    USER = "USER"
    ROBOT = "ROBOT"


@dataclass(frozen=True)
class BBox:
    """One labeled detection box, corners in pixels."""

    label: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box for {self.label!r}: "
                f"({self.x_min},{self.y_min})-({self.x_max},{self.y_max})"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BBox":
        return cls(
            label=str(data["label"]),
            x_min=float(data["x_min"]),
            y_min=float(data["y_min"]),
            x_max=float(data["x_max"]),
            y_max=float(data["y_max"]),
            confidence=float(data.get("confidence", 1.0)),
        )


@dataclass(frozen=True)
class DetectionFrame:
    """All boxes detected in one camera frame."""

    source: Viewpoint
    timestamp_us: int
    boxes: tuple[BBox, ...]
    frame_width: int
    frame_height: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "source", Viewpoint(self.source))
        for box in self.boxes:
            if (
                box.x_min < 0
                or box.y_min < 0
                or box.x_max > self.frame_width
                or box.y_max > self.frame_height
            ):
                raise ValueError(
                    f"box {box.label!r} exceeds {self.frame_width}x{self.frame_height} frame"
                )

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "timestamp_us": self.timestamp_us,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "boxes": [b.to_dict() for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionFrame":
        return cls(
            source=Viewpoint(data["source"]),
            timestamp_us=int(data["timestamp_us"]),
            boxes=tuple(BBox.from_dict(b) for b in data["boxes"]),
            frame_width=int(data["frame_width"]),
            frame_height=int(data["frame_height"]),
        )


def bbox_center(box: BBox) -> tuple[float, float]:
    """Geometric center of a box."""
    return ((box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0)


def gaze_match(gaze: MeanGaze, box: BBox) -> bool:
    """True iff the mean gaze lies inside the box, bounds inclusive."""
    return (
        box.x_min <= gaze.x_mean <= box.x_max
        and box.y_min <= gaze.y_mean <= box.y_max
    )


def resolve_target(gaze: MeanGaze, frame: DetectionFrame) -> Optional[tuple[str, BBox]]:
    """Pick the part the user is looking at in their own view.

    Among all boxes the gaze falls in, the smallest-area box wins (the most
    specific object under the gaze); area ties break toward the box whose
    center is nearest the gaze, and remaining ties toward the lexicographically
    smallest label. Returns None when no box matches.
    """
    if frame.source is not Viewpoint.USER:
        raise ValueError(f"resolve_target needs a USER frame, got {frame.source.value}")
    best: Optional[tuple[float, float, str, BBox]] = None
    for box in frame.boxes:
        if not gaze_match(gaze, box):
            continue
        cx, cy = bbox_center(box)
        key = (box.area, math.hypot(gaze.x_mean - cx, gaze.y_mean - cy), box.label)
        if best is None or key < (best[0], best[1], best[2]):
            best = (*key, box)
    if best is None:
        return None
    return best[2], best[3]


def align_object(
    frame: DetectionFrame, label: str, min_confidence: float = 0.0
) -> Optional[BBox]:
    """Robot-side confirmation that the requested label is in its view.

    Multiple instances of the label resolve to the highest-confidence box,
    then to the one nearest the frame center. Returns None when the label is
    absent (or every instance falls below ``min_confidence``).
    """
    if frame.source is not Viewpoint.ROBOT:
        raise ValueError(f"align_object needs a ROBOT frame, got {frame.source.value}")
    fx, fy = frame.frame_width / 2.0, frame.frame_height / 2.0
    best: Optional[tuple[float, float, BBox]] = None
    for box in frame.boxes:
        if box.label != label or box.confidence < min_confidence:
            continue
        cx, cy = bbox_center(box)
        key = (-box.confidence, math.hypot(cx - fx, cy - fy))
        if best is None or key < (best[0], best[1]):
            best = (*key, box)
    return None if best is None else best[2]
