"""Intent handling and the robot lifecycle state machine.

Binds the smoothed gaze stream (or touch taps) to plan validation,
announcements, and a single-arm fetch cycle:

    IDLE -> ANNOUNCING -> RETRIEVING -> DELIVERING -> RETURNING -> IDLE

Gaze and touch intents traverse the identical validate/announce/dispatch
path; every decision is appended to a totally ordered event log so a session
can be measured (and replayed) after the fact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .assembly import (
    AssemblyPlan,
    OrderingError,
    PlanError,
    PlanState,
    RequestOutcome,
    validate_request,
)
from .gaze import MeanGaze
from .perception import DetectionFrame, Viewpoint, align_object, resolve_target

SELECTED_TEMPLATE = "Object {label} selected; Bringing now"


class IntentSource(str, Enum):
    GAZE = "GAZE"
    TOUCH = "TOUCH"


class RobotPhase(str, Enum):
    IDLE = "IDLE"
    ANNOUNCING = "ANNOUNCING"
    RETRIEVING = "RETRIEVING"
    DELIVERING = "DELIVERING"
    RETURNING = "RETURNING"


class AnnouncementKind(str, Enum):
    SELECTED = "SELECTED"
    PREREQUISITE = "PREREQUISITE"
    UNAVAILABLE = "UNAVAILABLE"
    BUSY = "BUSY"


class RobotEvent(str, Enum):
    """World-side lifecycle events consumed by the orchestrator."""

    PICKED_UP = "PickedUp"
    DELIVERED = "Delivered"
    RETURNED = "Returned"
    ASSEMBLED = "Assembled"
    FAULT = "Fault"


@dataclass(frozen=True)
class IntentEvent:
    source: IntentSource
    label: str
    timestamp_us: int
    dwell_emissions: int = 0

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "label": self.label,
            "timestamp_us": self.timestamp_us,
            "dwell_emissions": self.dwell_emissions,
        }


@dataclass(frozen=True)
class Announcement:
    kind: AnnouncementKind
    text: str
    timestamp_us: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "text": self.text,
            "timestamp_us": self.timestamp_us,
        }


@dataclass(frozen=True)
class RobotCommand:
    """Fetch order for the (single) robot arm."""

    label: str
    step_id: str
    timestamp_us: int


@dataclass(frozen=True)
class EventLogRecord:
    timestamp_us: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"timestamp_us": self.timestamp_us, "kind": self.kind, **self.payload}


class EventLog:
    """Append-only session log, ordered by timestamp with arrival tiebreak."""

    def __init__(self) -> None:
        self.records: list[EventLogRecord] = []

    def append(self, timestamp_us: int, kind: str, payload: dict) -> EventLogRecord:
        record = EventLogRecord(timestamp_us, kind, payload)
        self.records.append(record)
        return record

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.records
        )

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


# Event log record kinds.
LOG_SESSION_START = "session_start"
LOG_GAZE_REF = "gaze_sample_ref"
LOG_MEAN_GAZE = "mean_gaze"
LOG_INTENT = "intent"
LOG_VALIDATION = "validation"
LOG_ANNOUNCEMENT = "announcement"
LOG_PHASE_CHANGE = "robot_phase_change"
LOG_DELIVERY = "delivery"
LOG_ASSEMBLY_MARK = "assembly_mark"
LOG_FAULT = "fault"


@dataclass(frozen=True)
class OrchestratorConfig:
    # One matching emission is enough by default: the windowed mean already
    # filters transient glances. Raise for stricter deployments.
    dwell_threshold: int = 1
    refractory_us: int = 2_000_000
    frame_staleness_us: int = 200_000
    min_confidence: float = 0.0


_EXPECTED_PHASE = {
    RobotEvent.PICKED_UP: RobotPhase.RETRIEVING,
    RobotEvent.DELIVERED: RobotPhase.DELIVERING,
    RobotEvent.RETURNED: RobotPhase.RETURNING,
}

_NEXT_PHASE = {
    RobotEvent.PICKED_UP: RobotPhase.DELIVERING,
    RobotEvent.DELIVERED: RobotPhase.RETURNING,
    RobotEvent.RETURNED: RobotPhase.IDLE,
}


class Orchestrator:
    """Single-loop session brain: one plan, one robot arm, one event log."""

    def __init__(
        self,
        plan: AssemblyPlan,
        config: OrchestratorConfig | None = None,
        command_sink: Optional[Callable[[RobotCommand], None]] = None,
    ):
        self.plan = plan
        self.config = config or OrchestratorConfig()
        self.state = PlanState()
        self.phase = RobotPhase.IDLE
        self.log = EventLog()
        self.command_sink = command_sink
        self.active_command: Optional[RobotCommand] = None
        self._dwell_label: Optional[str] = None
        self._dwell_count = 0
        self._refractory_until: dict[str, int] = {}
        self._latest_frames: dict[Viewpoint, DetectionFrame] = {}

    # -- inputs -----------------------------------------------------------

    def start_session(self, timestamp_us: int) -> None:
        self.log.append(
            timestamp_us, LOG_SESSION_START, {"plan_id": self.plan.plan_id}
        )

    def observe_frame(self, frame: DetectionFrame) -> None:
        self._latest_frames[frame.source] = frame

    def latest_frame(self, source: Viewpoint) -> Optional[DetectionFrame]:
        return self._latest_frames.get(source)

    def on_mean_gaze(self, gaze: MeanGaze, timestamp_us: int) -> Optional[IntentEvent]:
        """Track dwell over consecutive emissions; fire an intent when due.

        The emission is matched against the freshest USER frame; a stale or
        missing frame resolves to nothing (and resets the dwell counter, same
        as gazing at empty table).
        """
        self.log.append(
            timestamp_us,
            LOG_MEAN_GAZE,
            {"x_mean": gaze.x_mean, "y_mean": gaze.y_mean, "n": gaze.n, "span_us": gaze.span_us},
        )
        frame = self._latest_frames.get(Viewpoint.USER)
        if frame is None or timestamp_us - frame.timestamp_us > self.config.frame_staleness_us:
            target = None
        else:
            target = resolve_target(gaze, frame)
        if target is None:
            self._dwell_label = None
            self._dwell_count = 0
            return None
        label = target[0]
        if label == self._dwell_label:
            self._dwell_count += 1
        else:
            self._dwell_label = label
            self._dwell_count = 1
        if self._dwell_count < self.config.dwell_threshold:
            return None
        if timestamp_us < self._refractory_until.get(label, 0):
            return None
        self._refractory_until[label] = timestamp_us + self.config.refractory_us
        return IntentEvent(IntentSource.GAZE, label, timestamp_us, self._dwell_count)

    def on_touch(self, label: str, timestamp_us: int) -> IntentEvent:
        """A tap is an immediate intent; validation happens downstream."""
        return IntentEvent(IntentSource.TOUCH, label, timestamp_us, 0)

    # -- intent handling ---------------------------------------------------

    def handle_intent(
        self, intent: IntentEvent
    ) -> tuple[Announcement, Optional[RobotCommand]]:
        """Validate an intent and produce the announcement (and maybe a fetch).

        Intents arriving while the arm is busy are announced BUSY and dropped
        rather than queued; the user stays in control of what gets fetched
        next.
        """
        t = intent.timestamp_us
        self.log.append(t, LOG_INTENT, intent.to_dict())
        if self.phase is not RobotPhase.IDLE:
            announcement = Announcement(
                AnnouncementKind.BUSY,
                f"Robot is busy; {intent.label} not queued",
                t,
            )
            self._log_announcement(announcement)
            return announcement, None

        result = validate_request(self.plan, self.state, intent.label)
        self.log.append(t, LOG_VALIDATION, result.to_dict())

        if result.outcome is RequestOutcome.ALLOWED:
            robot_frame = self._latest_frames.get(Viewpoint.ROBOT)
            box = (
                align_object(robot_frame, intent.label, self.config.min_confidence)
                if robot_frame is not None
                else None
            )
            if box is None:
                announcement = Announcement(
                    AnnouncementKind.UNAVAILABLE,
                    f"Object {intent.label} is not visible to the robot",
                    t,
                )
                self._log_announcement(announcement)
                return announcement, None
            announcement = Announcement(
                AnnouncementKind.SELECTED,
                SELECTED_TEMPLATE.format(label=intent.label),
                t,
            )
            self._log_announcement(announcement)
            command = RobotCommand(intent.label, result.step_id, t)
            self._set_phase(RobotPhase.ANNOUNCING, t)
            self._set_phase(RobotPhase.RETRIEVING, t)
            self.active_command = command
            if self.command_sink is not None:
                self.command_sink(command)
            return announcement, command

        if result.outcome is RequestOutcome.PREREQUISITE_NEEDED:
            labels = [self.plan.step(sid).part_label for sid in result.pending]
            announcement = Announcement(
                AnnouncementKind.PREREQUISITE,
                f"Object {intent.label} needs {', '.join(labels)} assembled first",
                t,
            )
        elif result.outcome is RequestOutcome.ALREADY_HANDLED:
            announcement = Announcement(
                AnnouncementKind.UNAVAILABLE,
                f"Object {intent.label} was already handled",
                t,
            )
        else:  # UNKNOWN_PART
            announcement = Announcement(
                AnnouncementKind.UNAVAILABLE,
                f"Object {intent.label} is not part of the current plan",
                t,
            )
        self._log_announcement(announcement)
        return announcement, None

    # -- robot lifecycle ----------------------------------------------------

    def on_robot_event(
        self, event: RobotEvent | str, label: Optional[str], timestamp_us: int
    ) -> None:
        """Advance the fetch cycle on a world event; faults force IDLE."""
        event = RobotEvent(event)
        t = timestamp_us

        if event is RobotEvent.ASSEMBLED:
            self._mark_assembled(label, t)
            return

        if event is RobotEvent.FAULT:
            self._fault(f"world fault for {label!r}", t)
            return

        expected = _EXPECTED_PHASE[event]
        if self.phase is not expected:
            self._fault(
                f"protocol error: {event.value} while {self.phase.value}", t
            )
            return
        if (
            self.active_command is not None
            and label is not None
            and label != self.active_command.label
        ):
            self._fault(
                f"protocol error: {event.value} for {label!r} while fetching "
                f"{self.active_command.label!r}",
                t,
            )
            return

        if event is RobotEvent.DELIVERED:
            step_id = self.active_command.step_id if self.active_command else None
            if step_id is not None:
                self.state.mark_delivered(self.plan, step_id)
            self.log.append(
                t,
                LOG_DELIVERY,
                {"label": label, "step_id": step_id},
            )
        self._set_phase(_NEXT_PHASE[event], t)
        if event is RobotEvent.RETURNED:
            self.active_command = None

    # -- helpers ------------------------------------------------------------

    def _mark_assembled(self, label: Optional[str], t: int) -> None:
        step = self.plan.step_for_label(label) if label else None
        if step is None:
            self.log.append(t, LOG_FAULT, {"reason": f"assembly mark for unknown part {label!r}"})
            return
        try:
            self.state.mark_assembled(self.plan, step.step_id)
        except (OrderingError, PlanError) as exc:
            self.log.append(t, LOG_FAULT, {"reason": str(exc)})
            return
        self.log.append(
            t, LOG_ASSEMBLY_MARK, {"label": label, "step_id": step.step_id}
        )

    def _fault(self, reason: str, t: int) -> None:
        self.log.append(t, LOG_FAULT, {"reason": reason})
        if self.phase is not RobotPhase.IDLE:
            self._set_phase(RobotPhase.IDLE, t)
        self.active_command = None

    def _set_phase(self, phase: RobotPhase, t: int) -> None:
        previous = self.phase
        self.phase = phase
        self.log.append(
            t,
            LOG_PHASE_CHANGE,
            {"from": previous.value, "to": phase.value},
        )

    def _log_announcement(self, announcement: Announcement) -> None:
        self.log.append(
            announcement.timestamp_us, LOG_ANNOUNCEMENT, announcement.to_dict()
        )
