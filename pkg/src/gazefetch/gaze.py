"""Streaming gaze smoothing.

Raw 2D gaze points arrive as a timestamped stream; a sliding window of the
most recent valid points is averaged into a mean-gaze emission that downstream
matching consumes. The windowed mean is the transient-glance filter: brief
looks never fill the window with a single target, sustained attention does.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

DEFAULT_WINDOW_SIZE = 15
DEFAULT_SAMPLE_RATE_HZ = 20.0


class StreamOrderError(ValueError):
    """A gaze sample did not advance the stream clock."""


@dataclass(frozen=True)
class GazeSample:
    """One raw gaze point in scene-camera pixels.

    ``valid`` is the tracker confidence flag; consumers ignore x/y when it
    is false.
    """

    timestamp_us: int
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class StreamConfig:
    """Parameters of one gaze stream."""

    frame_width: int = 1920
    frame_height: int = 1080
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    window_size: int = DEFAULT_WINDOW_SIZE

    def __post_init__(self) -> None:
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")

    @property
    def sample_period_us(self) -> int:
        return round(1_000_000 / self.sample_rate_hz)

    def to_dict(self) -> dict:
        return {
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "sample_rate_hz": self.sample_rate_hz,
            "window_size": self.window_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StreamConfig":
        return cls(
            frame_width=int(data["frame_width"]),
            frame_height=int(data["frame_height"]),
            sample_rate_hz=float(data["sample_rate_hz"]),
            window_size=int(data["window_size"]),
        )


@dataclass(frozen=True)
class MeanGaze:
    """Arithmetic mean of the valid samples currently in the window."""

    x_mean: float
    y_mean: float
    n: int
    span_us: int


class GazeWindow:
    """Sliding window over valid gaze samples.

    Invalid samples are discarded (never zero-filled, which would drag the
    mean toward the frame origin) but still advance the stream clock. Once
    the window holds ``window_size`` valid samples, every further valid push
    emits a MeanGaze (overlapping windows, one emission per push).
    """

    def __init__(self, config: StreamConfig | None = None):
        self.config = config or StreamConfig()
        self._samples: deque[GazeSample] = deque(maxlen=self.config.window_size)
        self._last_timestamp_us: int | None = None

    def push(self, sample: GazeSample) -> MeanGaze | None:
        """Accept the next stream sample; return a MeanGaze if one is due."""
        last = self._last_timestamp_us
        if last is not None and sample.timestamp_us <= last:
            raise StreamOrderError(
                f"sample timestamp {sample.timestamp_us}us does not advance "
                f"the stream (last accepted {last}us)"
            )
        self._last_timestamp_us = sample.timestamp_us
        if not sample.valid:
            return None
        self._samples.append(sample)
        if len(self._samples) < self.config.window_size:
            return None
        # Recomputed from scratch each time: no incremental accumulation drift.
        n = len(self._samples)
        return MeanGaze(
            x_mean=sum(s.x for s in self._samples) / n,
            y_mean=sum(s.y for s in self._samples) / n,
            n=n,
            span_us=self._samples[-1].timestamp_us - self._samples[0].timestamp_us,
        )

    def reset(self) -> None:
        """Empty the window; the next emission needs a full set of fresh samples.

        The stream clock is kept, so timestamps must stay monotone across a
        reset within one stream.
        """
        self._samples.clear()

    def __len__(self) -> int:
        return len(self._samples)
