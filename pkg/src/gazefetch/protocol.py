"""Wire protocol and trace persistence.

Every transport (raw stream socket, WebSocket, trace file) carries the same
UTF-8 newline-delimited JSON messages: an envelope of ``type``, a per-sender
monotone ``seq``, and a type-specific ``payload``. A trace file is the full
message record of a session — header first — and is sufficient to replay it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterator, Optional

from .gaze import GazeSample
from .perception import DetectionFrame

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Line is not a valid wire message."""


class MessageType(str, Enum):
    HELLO = "HELLO"
    CONFIG = "CONFIG"
    GAZE_SAMPLE = "GAZE_SAMPLE"
    DETECTION_FRAME = "DETECTION_FRAME"
    TOUCH_REQUEST = "TOUCH_REQUEST"
    INTENT = "INTENT"
    ANNOUNCEMENT = "ANNOUNCEMENT"
    ROBOT_STATE = "ROBOT_STATE"
    SCENE_SNAPSHOT = "SCENE_SNAPSHOT"
    METRICS = "METRICS"
    FAULT = "FAULT"


# Message types a replay re-drives into the orchestrator. ROBOT_STATE counts
# only when its payload carries a world event (an "event" key) rather than a
# phase broadcast.
INPUT_TYPES = {
    MessageType.GAZE_SAMPLE,
    MessageType.DETECTION_FRAME,
    MessageType.TOUCH_REQUEST,
    MessageType.INTENT,
    MessageType.ROBOT_STATE,
}


@dataclass(frozen=True)
class WireMessage:
    type: MessageType
    seq: int
    payload: dict

    def to_dict(self) -> dict:
        return {"type": self.type.value, "seq": self.seq, "payload": self.payload}


def encode(message: WireMessage) -> str:
    """One message, one line (no trailing newline)."""
    return json.dumps(message.to_dict(), separators=(",", ":"))


def decode(line: str) -> WireMessage:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ProtocolError("message must be a JSON object")
    try:
        mtype = MessageType(data["type"])
    except KeyError:
        raise ProtocolError("message missing 'type'") from None
    except ValueError:
        raise ProtocolError(f"unknown message type {data.get('type')!r}") from None
    seq = data.get("seq")
    if not isinstance(seq, int):
        raise ProtocolError("message missing integer 'seq'")
    payload = data.get("payload")
    if not isinstance(payload, dict):
        raise ProtocolError("message missing object 'payload'")
    return WireMessage(mtype, seq, payload)


# -- payload builders -------------------------------------------------------


def hello_payload(role: str, name: str, version: int = PROTOCOL_VERSION) -> dict:
    return {"version": version, "role": role, "name": name}


def gaze_sample_payload(sample: GazeSample) -> dict:
    return {
        "timestamp_us": sample.timestamp_us,
        "x": sample.x,
        "y": sample.y,
        "valid": sample.valid,
    }


def parse_gaze_sample(payload: dict) -> GazeSample:
    try:
        return GazeSample(
            timestamp_us=int(payload["timestamp_us"]),
            x=float(payload["x"]),
            y=float(payload["y"]),
            valid=bool(payload.get("valid", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad GAZE_SAMPLE payload: {exc}") from exc


def detection_frame_payload(frame: DetectionFrame) -> dict:
    return frame.to_dict()


def parse_detection_frame(payload: dict) -> DetectionFrame:
    try:
        return DetectionFrame.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad DETECTION_FRAME payload: {exc}") from exc


def robot_event_payload(kind: str, label: str, timestamp_us: int) -> dict:
    return {"event": kind, "label": label, "timestamp_us": timestamp_us}


def robot_phase_payload(phase: str, timestamp_us: int, pose_px: Optional[list] = None) -> dict:
    payload = {"phase": phase, "timestamp_us": timestamp_us}
    if pose_px is not None:
        payload["pose_px"] = pose_px
    return payload


def is_world_event(message: WireMessage) -> bool:
    return message.type is MessageType.ROBOT_STATE and "event" in message.payload


def is_replay_input(message: WireMessage) -> bool:
    if message.type not in INPUT_TYPES:
        return False
    if message.type is MessageType.ROBOT_STATE:
        return is_world_event(message)
    return True


# -- trace files -------------------------------------------------------------


class TraceWriter:
    """Appends wire messages (plus arrival stamps) to a JSONL trace file."""

    def __init__(self, target: str | Path | IO[str]):
        if hasattr(target, "write"):
            self._fh: IO[str] = target
            self._owns = False
        else:
            self._fh = open(target, "w", encoding="utf-8", newline="\n")
            self._owns = True
        self._wrote_header = False

    def write_header(self, config_payload: dict, arrival_us: int = 0) -> None:
        if self._wrote_header:
            raise ProtocolError("trace header already written")
        self.append(WireMessage(MessageType.CONFIG, 0, config_payload), arrival_us)
        self._wrote_header = True

    def append(self, message: WireMessage, arrival_us: int) -> None:
        record = {"arrival_us": arrival_us, **message.to_dict()}
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._fh.flush()
        if self._owns:
            self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass(frozen=True)
class TraceRecord:
    arrival_us: int
    message: WireMessage


class TraceReader:
    """Streams a trace file; flags truncation instead of failing mid-file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.header: Optional[WireMessage] = None
        self.truncated = False

    def __iter__(self) -> Iterator[TraceRecord]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for index, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                    message = decode(line)
                except (json.JSONDecodeError, ProtocolError):
                    # A torn final line is a truncated recording; anything
                    # else mid-file is equally unusable from here on.
                    self.truncated = True
                    return
                arrival = int(data.get("arrival_us", 0))
                if index == 0:
                    if message.type is not MessageType.CONFIG:
                        raise ProtocolError(
                            "trace missing CONFIG header as first record"
                        )
                    self.header = message
                yield TraceRecord(arrival, message)
