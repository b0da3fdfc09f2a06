"""The live session hub.

Every transport (WebSocket frames, raw TCP lines) funnels into one asyncio
queue consumed by a single task, which is what makes the merge order of
concurrent sources well defined: arrival order at the gateway. The simulated
world ticks on the same loop and enqueues its detection frames and robot
events like any other producer. Announcements, robot state, and scene
snapshots fan out to every subscriber; the whole session is appended to a
trace file that can replay it.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Awaitable, Callable, Optional

from ..analysis import SessionMetrics, session_metrics
from ..assembly import resolve_plan
from ..config import ServiceConfig
from ..engine import SEED_DETECTIONS, SessionEngine
from ..orchestrator import Announcement, AnnouncementKind, RobotCommand
from ..perception import Viewpoint
from ..protocol import (
    PROTOCOL_VERSION,
    MessageType,
    ProtocolError,
    TraceWriter,
    WireMessage,
    decode,
    encode,
    hello_payload,
    robot_event_payload,
)
from ..sim import SimClock, SimWorld, project_part_box, randomize_scene, render_detections

import random

log = logging.getLogger(__name__)

SendFn = Callable[[str], Awaitable[None]]


@dataclass
class Connection:
    conn_id: int
    send: SendFn
    role: str = ""
    greeted: bool = False
    expected_seq: int = 0
    line_no: int = 0
    last_stamp_us: int = -1
    subscribed: bool = False
    reply_seq: int = 0

    def next_reply_seq(self) -> int:
        seq = self.reply_seq
        self.reply_seq += 1
        return seq


@dataclass
class _QueueItem:
    message: WireMessage
    arrival_us: int
    conn: Optional[Connection] = None
    reply: Optional[asyncio.Future] = None


class GatewayServer:
    """One live session: engine + simulated world + fan-out."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.plan = resolve_plan(config.plan)
        self.scene = randomize_scene(self.plan, config.seed, robot=config.engine.robot)
        self.clock = SimClock(tick_us=config.engine.tick_us)
        self.world = SimWorld(
            self.scene,
            robot=config.engine.robot,
            clock=self.clock,
            assemble_s=config.engine.assemble_s,
            auto_assemble=True,
        )
        self._pending_commands: list[RobotCommand] = []
        self.engine = SessionEngine(
            self.plan, config.engine, command_sink=self._pending_commands.append
        )
        self._detect_rng = random.Random(config.seed + SEED_DETECTIONS)
        self.queue: "asyncio.Queue[_QueueItem]" = asyncio.Queue()
        self.connections: dict[int, Connection] = {}
        self._next_conn_id = 0
        self._in_seq = 0
        self._snapshot_seq = 0
        self.announcements: list[Announcement] = []
        self.trace: Optional[TraceWriter] = None
        self._tasks: list[asyncio.Task] = []
        self._tcp_server: Optional[asyncio.base_events.Server] = None
        self.last_snapshot: Optional[dict] = None

    # -- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        if self.config.trace_path:
            self.trace = TraceWriter(self.config.trace_path)
            self.trace.write_header(self._header_payload())
        self.engine.start_session(self.clock.now_us)
        for event in self.world.start():
            self._feed(
                WireMessage(
                    MessageType.ROBOT_STATE,
                    0,
                    robot_event_payload(event.kind.value, event.label, event.timestamp_us),
                ),
                event.timestamp_us,
            )
        self._tasks.append(asyncio.create_task(self._guarded(self._consume(), "consumer")))
        self._tasks.append(asyncio.create_task(self._guarded(self._tick(), "ticker")))
        if self.config.tcp_port is not None:
            self._tcp_server = await asyncio.start_server(
                self._serve_tcp, self.config.host, self.config.tcp_port
            )

    async def _guarded(self, coro, name: str) -> None:
        try:
            await coro
        except asyncio.CancelledError:
            raise
        except Exception:
            log.exception("gateway %s task crashed; session is wedged", name)
            raise

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self.trace is not None:
            self.trace.close()

    def _header_payload(self) -> dict:
        return {
            "version": PROTOCOL_VERSION,
            "mode": "serve",
            "plan": self.plan.to_dict(),
            "seed": self.config.seed,
            "session_start_us": 0,
            "engine": self.config.engine.to_dict(),
            "scene": self.scene.to_dict(),
            "annotations": {},
        }

    # -- producers -------------------------------------------------------------

    async def _tick(self) -> None:
        """Advance the world on the wall clock; enqueue frames and events."""
        tick_s = self.config.engine.tick_us / 1e6
        next_frame_us = 0
        next_snapshot_us = 0
        snapshot_period = round(1_000_000 / self.config.snapshot_hz)
        frame_period = self.config.engine.detector_period_us
        while True:
            now = self.clock.now_us
            if now >= next_frame_us:
                for viewpoint in (Viewpoint.USER, Viewpoint.ROBOT):
                    frame = render_detections(
                        self.scene,
                        viewpoint,
                        self.config.engine.noise,
                        self._detect_rng,
                        timestamp_us=now,
                    )
                    await self.queue.put(
                        _QueueItem(
                            WireMessage(MessageType.DETECTION_FRAME, 0, frame.to_dict()),
                            now,
                        )
                    )
                next_frame_us += frame_period
            if now >= next_snapshot_us:
                await self._broadcast_snapshot(now)
                next_snapshot_us += snapshot_period
            for event in self.world.step():
                await self.queue.put(
                    _QueueItem(
                        WireMessage(
                            MessageType.ROBOT_STATE,
                            0,
                            robot_event_payload(
                                event.kind.value, event.label, event.timestamp_us
                            ),
                        ),
                        event.timestamp_us,
                    )
                )
            await asyncio.sleep(tick_s)

    # -- the single consumer ------------------------------------------------------

    async def _consume(self) -> None:
        while True:
            item = await self.queue.get()
            outputs = self._feed(item.message, item.arrival_us)
            if item.reply is not None and not item.reply.done():
                item.reply.set_result(outputs)
            for output in outputs:
                if output.type is MessageType.FAULT and item.conn is not None:
                    await self._send_safe(item.conn, encode(output))
                else:
                    await self._broadcast(output)

    def _feed(self, message: WireMessage, arrival_us: int) -> list[WireMessage]:
        """Synchronous engine application, mirroring the run-sim driver."""
        message = WireMessage(message.type, self._in_seq, message.payload)
        self._in_seq += 1
        if self.trace is not None:
            self.trace.append(message, arrival_us)
        outputs = list(self.engine.handle_message(message))
        while self._pending_commands:
            command = self._pending_commands.pop(0)
            for event in self.world.command_fetch(command.label, command.timestamp_us):
                outputs.extend(
                    self._feed(
                        WireMessage(
                            MessageType.ROBOT_STATE,
                            0,
                            robot_event_payload(
                                event.kind.value, event.label, event.timestamp_us
                            ),
                        ),
                        arrival_us,
                    )
                )
        for output in outputs:
            if self.trace is not None:
                self.trace.append(output, arrival_us)
            if output.type is MessageType.ANNOUNCEMENT:
                self.announcements.append(
                    Announcement(
                        AnnouncementKind(output.payload["kind"]),
                        output.payload["text"],
                        output.payload["timestamp_us"],
                    )
                )
        return outputs

    # -- fan-out ----------------------------------------------------------------

    async def _broadcast(self, message: WireMessage) -> None:
        line = encode(message)
        for conn in list(self.connections.values()):
            if conn.subscribed:
                await self._send_safe(conn, line)

    async def _send_safe(self, conn: Connection, line: str) -> None:
        try:
            await conn.send(line)
        except Exception:
            self.connections.pop(conn.conn_id, None)

    async def _broadcast_snapshot(self, now_us: int) -> None:
        snapshot = self.build_snapshot(now_us)
        message = WireMessage(MessageType.SCENE_SNAPSHOT, self._snapshot_seq, snapshot)
        self._snapshot_seq += 1
        if self.trace is not None:
            self.trace.append(message, now_us)
        await self._broadcast(message)

    def build_snapshot(self, now_us: int) -> dict:
        camera = self.scene.cameras[Viewpoint.USER]
        parts = []
        for part in self.scene.parts:
            x0, y0, x1, y1 = project_part_box(part, camera)
            parts.append(
                {
                    "label": part.label,
                    "zone": part.zone.value,
                    "assembled": part.assembled,
                    "bbox": {"x_min": x0, "y_min": y0, "x_max": x1, "y_max": y1},
                }
            )
        rx, ry = self.world.robot_position(now_us)
        rpx = camera.project(rx, ry)
        zones = {
            zone.value: list(camera.project(rect.x_min, rect.y_min))
            + list(camera.project(rect.x_max, rect.y_max))
            for zone, rect in self.scene.zones.items()
        }
        orch = self.engine.orchestrator
        snapshot = {
            "timestamp_us": now_us,
            "snapshot_seq": self._snapshot_seq,
            "clock_s": now_us / 1e6,
            "phase": orch.phase.value,
            "robot": {"x_px": rpx[0], "y_px": rpx[1]},
            "parts": parts,
            "zones_px": zones,
            "delivered": sorted(
                self.plan.step(sid).part_label for sid in orch.state.delivered
            ),
            "assembled": sorted(
                self.plan.step(sid).part_label for sid in orch.state.assembled
            ),
            "frame_width": camera.frame_width,
            "frame_height": camera.frame_height,
        }
        self.last_snapshot = snapshot
        return snapshot

    def current_metrics(self) -> SessionMetrics:
        return session_metrics(self.engine.log, self.plan, None)

    # -- connection handling -------------------------------------------------------

    def register(self, send: SendFn) -> Connection:
        conn = Connection(self._next_conn_id, send)
        self._next_conn_id += 1
        self.connections[conn.conn_id] = conn
        return conn

    def unregister(self, conn: Connection) -> None:
        self.connections.pop(conn.conn_id, None)

    async def handle_line(self, conn: Connection, line: str) -> bool:
        """Apply one inbound line; returns False when the connection must close."""
        conn.line_no += 1
        line = line.strip()
        if not line:
            return True
        try:
            message = decode(line)
        except ProtocolError as exc:
            await self._send_safe(
                conn,
                encode(
                    WireMessage(
                        MessageType.FAULT,
                        conn.next_reply_seq(),
                        {"reason": str(exc), "line": conn.line_no},
                    )
                ),
            )
            return True

        if not conn.greeted:
            if message.type is not MessageType.HELLO:
                await self._send_safe(
                    conn,
                    encode(
                        WireMessage(
                            MessageType.FAULT,
                            conn.next_reply_seq(),
                            {"reason": "HELLO required first", "line": conn.line_no},
                        )
                    ),
                )
                return True
            version = message.payload.get("version")
            if version != PROTOCOL_VERSION:
                await self._send_safe(
                    conn,
                    encode(
                        WireMessage(
                            MessageType.FAULT,
                            conn.next_reply_seq(),
                            {
                                "reason": f"unsupported protocol version {version!r}; "
                                f"this gateway speaks {PROTOCOL_VERSION}",
                                "line": conn.line_no,
                            },
                        )
                    ),
                )
                return False  # close with reason
            conn.greeted = True
            conn.subscribed = True
            conn.role = str(message.payload.get("role", ""))
            conn.expected_seq = message.seq + 1
            await self._send_safe(
                conn,
                encode(
                    WireMessage(
                        MessageType.HELLO,
                        conn.next_reply_seq(),
                        hello_payload("engine", "gateway"),
                    )
                ),
            )
            await self._send_safe(
                conn,
                encode(
                    WireMessage(
                        MessageType.CONFIG, conn.next_reply_seq(), self._header_payload()
                    )
                ),
            )
            if self.last_snapshot is not None:
                await self._send_safe(
                    conn,
                    encode(
                        WireMessage(
                            MessageType.SCENE_SNAPSHOT, self._snapshot_seq, self.last_snapshot
                        )
                    ),
                )
            return True

        if message.seq != conn.expected_seq:
            await self._send_safe(
                conn,
                encode(
                    WireMessage(
                        MessageType.FAULT,
                        conn.next_reply_seq(),
                        {
                            "reason": f"seq gap: expected {conn.expected_seq}, got {message.seq}",
                            "line": conn.line_no,
                        },
                    )
                ),
            )
            conn.expected_seq = message.seq + 1
        else:
            conn.expected_seq += 1

        message = self._restamp(conn, message)
        await self.queue.put(_QueueItem(message, self.clock.now_us, conn))
        return True

    def _restamp(self, conn: Connection, message: WireMessage) -> WireMessage:
        """Live clients carry their own clocks; rebase onto the engine clock.

        Keeps per-connection stamps strictly increasing so the stream-order
        contract holds even for bursts inside one tick.
        """
        if message.type not in (MessageType.GAZE_SAMPLE, MessageType.TOUCH_REQUEST):
            return message
        stamp = max(self.clock.now_us, conn.last_stamp_us + 1)
        conn.last_stamp_us = stamp
        payload = dict(message.payload)
        payload["timestamp_us"] = stamp
        return WireMessage(message.type, message.seq, payload)

    async def submit(self, message: WireMessage) -> list[WireMessage]:
        """Enqueue an internally produced message and await the engine's outputs."""
        reply: asyncio.Future = asyncio.get_running_loop().create_future()
        await self.queue.put(_QueueItem(message, self.clock.now_us, None, reply))
        return await reply

    # -- raw TCP transport -----------------------------------------------------------

    async def _serve_tcp(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        async def send(line: str) -> None:
            writer.write(line.encode("utf-8") + b"\n")
            await writer.drain()

        conn = self.register(send)
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                keep = await self.handle_line(conn, raw.decode("utf-8", "replace"))
                if not keep:
                    break
        except (ConnectionResetError, asyncio.IncompleteReadError):
            pass
        finally:
            self.unregister(conn)
            writer.close()
            try:
                await writer.wait_closed()
            except Exception:
                pass
