"""Session engine: one ordered message stream in, one event log out.

The engine applies wire messages to the orchestrator in arrival order and
turns the orchestrator's reactions (announcements, phase changes, faults)
back into wire messages. ``run_sim`` drives a fully simulated session from a
request script; ``replay`` re-drives a recorded trace through a fresh engine,
which must reproduce the original event log byte for byte.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .analysis import InputError, SessionMetrics, session_metrics
from .assembly import AssemblyPlan, RequestOutcome, load_plan, resolve_plan, validate_request
from .config import EngineConfig
from .gaze import GazeSample, GazeWindow, StreamConfig, StreamOrderError
from .orchestrator import (
    LOG_ANNOUNCEMENT,
    LOG_FAULT,
    LOG_PHASE_CHANGE,
    Announcement,
    AnnouncementKind,
    EventLog,
    IntentEvent,
    IntentSource,
    Orchestrator,
    RobotCommand,
    RobotEvent,
    RobotPhase,
)
from .perception import Viewpoint
from .protocol import (
    PROTOCOL_VERSION,
    MessageType,
    ProtocolError,
    TraceReader,
    TraceWriter,
    WireMessage,
    gaze_sample_payload,
    is_replay_input,
    parse_detection_frame,
    parse_gaze_sample,
    robot_event_payload,
    robot_phase_payload,
)
from .sim import (
    Scene,
    ScriptError,
    SimClock,
    SimWorld,
    randomize_scene,
    render_detections,
)

# Deterministic sub-seed offsets for the independent random streams.
SEED_DETECTIONS = 1
SEED_GAZE = 2


class SessionEngine:
    """Wraps one orchestrator behind the wire protocol."""

    def __init__(
        self,
        plan: AssemblyPlan,
        config: EngineConfig | None = None,
        command_sink: Optional[Callable[[RobotCommand], None]] = None,
    ):
        self.plan = plan
        self.config = config or EngineConfig()
        self.window = GazeWindow(self.config.stream)
        self.orchestrator = Orchestrator(
            plan, self.config.orchestrator_config(), command_sink
        )
        self._out_seq = 0

    @property
    def log(self) -> EventLog:
        return self.orchestrator.log

    def start_session(self, timestamp_us: int = 0) -> None:
        self.orchestrator.start_session(timestamp_us)

    def _output(self, mtype: MessageType, payload: dict) -> WireMessage:
        message = WireMessage(mtype, self._out_seq, payload)
        self._out_seq += 1
        return message

    def handle_message(self, message: WireMessage) -> list[WireMessage]:
        """Apply one inbound message; return the engine's reactions."""
        mark = len(self.log.records)
        try:
            self._dispatch(message)
        except ProtocolError as exc:
            t = message.payload.get("timestamp_us", 0)
            self.log.append(int(t) if isinstance(t, (int, float)) else 0, LOG_FAULT, {"reason": str(exc)})
        return self._drain_outputs(mark)

    def _dispatch(self, message: WireMessage) -> None:
        mtype = message.type
        if mtype is MessageType.GAZE_SAMPLE:
            sample = parse_gaze_sample(message.payload)
            try:
                mean = self.window.push(sample)
            except StreamOrderError as exc:
                self.log.append(sample.timestamp_us, LOG_FAULT, {"reason": str(exc)})
                return
            if mean is not None:
                intent = self.orchestrator.on_mean_gaze(mean, sample.timestamp_us)
                if intent is not None:
                    self.orchestrator.handle_intent(intent)
        elif mtype is MessageType.DETECTION_FRAME:
            self.orchestrator.observe_frame(parse_detection_frame(message.payload))
        elif mtype is MessageType.TOUCH_REQUEST:
            label = message.payload.get("label")
            t = int(message.payload.get("timestamp_us", 0))
            if not isinstance(label, str):
                raise ProtocolError("TOUCH_REQUEST payload needs a 'label' string")
            intent = self.orchestrator.on_touch(label, t)
            self.orchestrator.handle_intent(intent)
        elif mtype is MessageType.INTENT:
            payload = message.payload
            try:
                intent = IntentEvent(
                    source=IntentSource(payload["source"]),
                    label=str(payload["label"]),
                    timestamp_us=int(payload["timestamp_us"]),
                    dwell_emissions=int(payload.get("dwell_emissions", 0)),
                )
            except (KeyError, ValueError) as exc:
                raise ProtocolError(f"bad INTENT payload: {exc}") from exc
            self.orchestrator.handle_intent(intent)
        elif mtype is MessageType.ROBOT_STATE:
            payload = message.payload
            if "event" not in payload:
                return  # phase broadcasts are outputs, not inputs
            try:
                self.orchestrator.on_robot_event(
                    RobotEvent(payload["event"]),
                    payload.get("label"),
                    int(payload["timestamp_us"]),
                )
            except (KeyError, ValueError) as exc:
                raise ProtocolError(f"bad ROBOT_STATE payload: {exc}") from exc
        # HELLO/CONFIG and broadcast types are transport concerns; nothing to do.

    def _drain_outputs(self, mark: int) -> list[WireMessage]:
        """Turn log records appended since ``mark`` into wire messages."""
        outputs = []
        for record in self.log.records[mark:]:
            if record.kind == LOG_ANNOUNCEMENT:
                outputs.append(
                    self._output(MessageType.ANNOUNCEMENT, dict(record.payload))
                )
            elif record.kind == LOG_PHASE_CHANGE:
                outputs.append(
                    self._output(
                        MessageType.ROBOT_STATE,
                        robot_phase_payload(record.payload["to"], record.timestamp_us),
                    )
                )
            elif record.kind == LOG_FAULT:
                outputs.append(
                    self._output(
                        MessageType.FAULT,
                        {"reason": record.payload.get("reason", ""), "timestamp_us": record.timestamp_us},
                    )
                )
        return outputs


# -- scripted user ------------------------------------------------------------


class _UserPhase(Enum):
    WAIT_READY = "wait_ready"
    FIXATING = "fixating"
    AWAIT_TOUCH = "await_touch"
    WAIT_DONE = "wait_done"
    DONE = "done"
    FAILED = "failed"


BUILTIN_SCRIPTS = ("fetch4", "touch4")


def load_script(script: dict | str | Path) -> dict:
    """Accept a script dict, a built-in script name, or a file path."""
    if isinstance(script, dict):
        return script
    name = str(script)
    if name in BUILTIN_SCRIPTS:
        text = resources.files("gazefetch.scripts").joinpath(f"{name}.json").read_text("utf-8")
        return json.loads(text)
    with open(script, "r", encoding="utf-8") as fh:
        return json.load(fh)


class ScriptedUser:
    """Deterministic stand-in for the human worker.

    Walks a list of part requests: waits until the plan allows the next part
    and the arm is idle, fixates the part (or taps its card) until the engine
    announces the selection, then looks away and waits for the delivered part
    to be assembled before moving on. Between fixations the gaze stream stays
    alive with invalid samples, the same shape a tracker produces when the
    user looks down at their hands.
    """

    def __init__(
        self,
        script: dict,
        scene: Scene,
        plan: AssemblyPlan,
        stream: StreamConfig,
        seed: int,
    ):
        self.mode = script.get("mode", "gaze")
        if self.mode not in ("gaze", "touch"):
            raise ScriptError(f"unknown script mode {self.mode!r}")
        self.requests: list[str] = list(script.get("requests", []))
        for label in self.requests:
            if plan.step_for_label(label) is None:
                raise ScriptError(f"script requests unknown part {label!r}")
            scene.part(label)  # raises KeyError for parts missing from the scene
        self.sigma_px = float(script.get("noise_sigma_px", 0.0))
        self.max_fixation_us = round(float(script.get("max_fixation_s", 15.0)) * 1e6)
        self.idle_between_us = round(float(script.get("idle_between_s", 0.2)) * 1e6)
        self.retry_after_us = round(float(script.get("retry_after_s", 1.0)) * 1e6)
        self.scene = scene
        self.plan = plan
        self.stream = stream
        self.rng = random.Random(seed)
        self.camera = scene.cameras[Viewpoint.USER]
        self.phase = _UserPhase.WAIT_READY if self.requests else _UserPhase.DONE
        self.index = 0
        self.not_before_us = 0
        self.fixation_start: Optional[int] = None
        self.failure: Optional[str] = None
        self._touch_sent = False
        self._touch_time = 0

    @property
    def done(self) -> bool:
        return self.phase in (_UserPhase.DONE, _UserPhase.FAILED)

    @property
    def current_label(self) -> Optional[str]:
        if self.index < len(self.requests):
            return self.requests[self.index]
        return None

    def observe_announcement(self, announcement: Announcement) -> None:
        label = self.current_label
        if label is None:
            return
        if (
            announcement.kind is AnnouncementKind.SELECTED
            and self.phase in (_UserPhase.FIXATING, _UserPhase.AWAIT_TOUCH)
            and f"Object {label} " in announcement.text
        ):
            self.phase = _UserPhase.WAIT_DONE

    def emit(self, t_us: int, orchestrator: Orchestrator) -> list[WireMessage]:
        """Produce this sample slot's messages given what the user can see."""
        self._advance(t_us, orchestrator)
        if self.mode == "touch":
            return self._emit_touch(t_us)
        return [self._gaze_message(t_us)]

    def _advance(self, t_us: int, orchestrator: Orchestrator) -> None:
        label = self.current_label
        if self.phase is _UserPhase.WAIT_READY:
            if label is None:
                self.phase = _UserPhase.DONE
                return
            ready = (
                t_us >= self.not_before_us
                and orchestrator.phase is RobotPhase.IDLE
                and validate_request(self.plan, orchestrator.state, label).outcome
                is RequestOutcome.ALLOWED
            )
            if ready:
                self.phase = (
                    _UserPhase.FIXATING if self.mode == "gaze" else _UserPhase.AWAIT_TOUCH
                )
                self.fixation_start = t_us
                self._touch_sent = False
        elif self.phase in (_UserPhase.FIXATING, _UserPhase.AWAIT_TOUCH):
            if t_us - self.fixation_start > self.max_fixation_us:
                self.failure = f"no selection for {label!r} within the fixation budget"
                self.phase = _UserPhase.FAILED
        elif self.phase is _UserPhase.WAIT_DONE:
            step = self.plan.step_for_label(label)
            if step.step_id in orchestrator.state.assembled:
                self.index += 1
                self.not_before_us = t_us + self.idle_between_us
                self.phase = (
                    _UserPhase.WAIT_READY
                    if self.index < len(self.requests)
                    else _UserPhase.DONE
                )

    def _gaze_message(self, t_us: int) -> WireMessage:
        if self.phase is _UserPhase.FIXATING:
            part = self.scene.part(self.current_label)
            cx, cy = self.camera.project(part.x_m, part.y_m)
            if self.sigma_px > 0:
                cx += self.rng.gauss(0.0, self.sigma_px)
                cy += self.rng.gauss(0.0, self.sigma_px)
            sample = GazeSample(t_us, cx, cy, True)
        else:
            sample = GazeSample(t_us, 0.0, 0.0, False)
        return WireMessage(MessageType.GAZE_SAMPLE, 0, gaze_sample_payload(sample))

    def _emit_touch(self, t_us: int) -> list[WireMessage]:
        if self.phase is _UserPhase.AWAIT_TOUCH and not self._touch_sent:
            self._touch_sent = True
            self._touch_time = t_us
            return [
                WireMessage(
                    MessageType.TOUCH_REQUEST,
                    0,
                    {"label": self.current_label, "timestamp_us": t_us},
                )
            ]
        if (
            self.phase is _UserPhase.AWAIT_TOUCH
            and self._touch_sent
            and t_us - self._touch_time >= self.retry_after_us
        ):
            self._touch_sent = False  # tap again next slot
        return []


# -- simulated session driver --------------------------------------------------


@dataclass
class RunResult:
    out_dir: Path
    trace_path: Path
    eventlog_path: Path
    metrics_path: Path
    metrics: SessionMetrics
    log: EventLog
    scene: Scene
    plan: AssemblyPlan
    failure: Optional[str] = None


def run_sim(
    plan_name: str | Path,
    seed: int,
    script: dict | str | Path,
    out_dir: str | Path,
    config: EngineConfig | None = None,
) -> RunResult:
    """Run one scripted end-to-end session entirely on the virtual clock."""
    config = config or EngineConfig()
    plan = resolve_plan(plan_name)
    script_doc = load_script(script)
    scene = randomize_scene(plan, seed, robot=config.robot)
    clock = SimClock(tick_us=config.tick_us)
    world = SimWorld(
        scene,
        robot=config.robot,
        clock=clock,
        assemble_s=config.assemble_s,
        auto_assemble=True,
    )
    user = ScriptedUser(script_doc, scene, plan, config.stream, seed + SEED_GAZE)
    detect_rng = random.Random(seed + SEED_DETECTIONS)

    pending_commands: list[RobotCommand] = []
    engine = SessionEngine(plan, config, command_sink=pending_commands.append)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.jsonl"
    eventlog_path = out_dir / "eventlog.jsonl"
    metrics_path = out_dir / "metrics.json"

    intended = list(script_doc.get("requests", []))
    header = {
        "version": PROTOCOL_VERSION,
        "mode": "run-sim",
        "plan": plan.to_dict(),
        "seed": seed,
        "session_start_us": 0,
        "engine": config.to_dict(),
        "script": script_doc,
        "scene": scene.to_dict(),
        "annotations": {"intended": intended},
    }

    in_seq = 0
    with TraceWriter(trace_path) as trace:
        trace.write_header(header)
        engine.start_session(0)

        def feed(message: WireMessage, arrival_us: int) -> None:
            nonlocal in_seq
            message = WireMessage(message.type, in_seq, message.payload)
            in_seq += 1
            trace.append(message, arrival_us)
            for output in engine.handle_message(message):
                trace.append(output, arrival_us)
                if output.type is MessageType.ANNOUNCEMENT:
                    user.observe_announcement(
                        Announcement(
                            AnnouncementKind(output.payload["kind"]),
                            output.payload["text"],
                            output.payload["timestamp_us"],
                        )
                    )
            while pending_commands:
                command = pending_commands.pop(0)
                for event in world.command_fetch(command.label, command.timestamp_us):
                    feed(_world_event_message(event), arrival_us)

        for event in world.start():
            feed(_world_event_message(event), 0)

        next_frame_us = 0
        next_sample_us = 0
        max_us = round(config.max_session_s * 1e6)
        failure: Optional[str] = None

        while True:
            now = clock.now_us
            if now >= next_frame_us:
                for viewpoint in (Viewpoint.USER, Viewpoint.ROBOT):
                    frame = render_detections(
                        scene, viewpoint, config.noise, detect_rng, timestamp_us=now
                    )
                    feed(
                        WireMessage(
                            MessageType.DETECTION_FRAME, 0, frame.to_dict()
                        ),
                        now,
                    )
                next_frame_us += config.detector_period_us
            if now >= next_sample_us:
                for message in user.emit(now, engine.orchestrator):
                    feed(message, now)
                next_sample_us += config.stream.sample_period_us

            if user.done and not world.busy and not world.events_pending:
                failure = user.failure
                break
            if now >= max_us:
                failure = f"session exceeded {config.max_session_s}s budget"
                break

            for event in world.step():
                feed(_world_event_message(event), event.timestamp_us)

        metrics = session_metrics(engine.log, plan, intended)
        if failure is not None:
            metrics.partial = True
        trace.append(
            WireMessage(MessageType.METRICS, in_seq, metrics.to_dict()),
            clock.now_us,
        )

    eventlog_path.write_text(engine.log.to_jsonl(), encoding="utf-8")
    metrics_path.write_text(
        json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return RunResult(
        out_dir=out_dir,
        trace_path=trace_path,
        eventlog_path=eventlog_path,
        metrics_path=metrics_path,
        metrics=metrics,
        log=engine.log,
        scene=scene,
        plan=plan,
        failure=failure,
    )


def _world_event_message(event) -> WireMessage:
    return WireMessage(
        MessageType.ROBOT_STATE,
        0,
        robot_event_payload(event.kind.value, event.label, event.timestamp_us),
    )


# -- replay ---------------------------------------------------------------------


@dataclass
class ReplayResult:
    log: EventLog
    metrics: SessionMetrics
    truncated: bool
    plan: AssemblyPlan


def replay(trace_path: str | Path, speed: float = 0.0) -> ReplayResult:
    """Re-drive a recorded session through a fresh engine.

    ``speed`` scales pacing against the recorded arrival stamps; 0 replays as
    fast as possible on virtual time. The orchestrator consumes the recorded
    payload timestamps, so the regenerated event log matches the original.
    """
    import time as _time

    reader = TraceReader(trace_path)
    engine: Optional[SessionEngine] = None
    intended = None
    prev_arrival: Optional[int] = None
    plan: Optional[AssemblyPlan] = None

    for record in reader:
        message = record.message
        if engine is None:
            if message.type is not MessageType.CONFIG:
                raise InputError("trace does not start with a CONFIG header")
            header = message.payload
            plan = load_plan(header["plan"])
            config = EngineConfig.from_dict(header.get("engine", {}))
            engine = SessionEngine(plan, config)
            engine.start_session(int(header.get("session_start_us", 0)))
            intended = header.get("annotations", {}).get("intended")
            prev_arrival = record.arrival_us
            continue
        if speed > 0 and prev_arrival is not None:
            delta_s = (record.arrival_us - prev_arrival) / 1_000_000.0 / speed
            if delta_s > 0:
                _time.sleep(delta_s)
        prev_arrival = record.arrival_us
        if is_replay_input(message):
            engine.handle_message(message)

    if engine is None:
        raise InputError("trace is empty or missing its header")
    metrics = session_metrics(engine.log, plan, intended)
    if reader.truncated:
        metrics.partial = True
    return ReplayResult(
        log=engine.log, metrics=metrics, truncated=reader.truncated, plan=plan
    )
