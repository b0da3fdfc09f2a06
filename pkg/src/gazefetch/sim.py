"""Deterministic simulated world.

A flat tabletop in meters, split into a robot workspace, a shared hand-over
zone, and the user's station. Two fixed top-down orthographic cameras project
the world into pixel frames, so synthetic detections and scripted gaze share
the exact coordinate space the matching logic runs in. All randomness flows
from seeded ``random.Random`` instances (MT19937), so a (plan, seed, script,
noise) tuple reproduces a byte-identical trace on any platform.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .assembly import AssemblyPlan, StepSource
from .gaze import GazeSample, StreamConfig
from .orchestrator import RobotEvent
from .perception import BBox, DetectionFrame, Viewpoint


class SimError(RuntimeError):
    pass


class CapacityError(SimError):
    """No room to place a part (randomization or drop slots exhausted)."""


class ScriptError(ValueError):
    """Gaze script references something the scene does not contain."""


class Zone(str, Enum):
    USER_STATION = "USER_STATION"
    ROBOT_WORKSPACE = "ROBOT_WORKSPACE"
    SHARED = "SHARED"


# Which zones each camera can see. The user's scene camera overlooks the
# whole table (they gaze at far-away parts to request them); the robot's
# camera covers its own workspace plus the hand-over zone.
VISIBLE_ZONES = {
    Viewpoint.USER: (Zone.ROBOT_WORKSPACE, Zone.SHARED, Zone.USER_STATION),
    Viewpoint.ROBOT: (Zone.ROBOT_WORKSPACE, Zone.SHARED),
}


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains_box(self, cx: float, cy: float, w: float, h: float) -> bool:
        return (
            cx - w / 2 >= self.x_min
            and cx + w / 2 <= self.x_max
            and cy - h / 2 >= self.y_min
            and cy + h / 2 <= self.y_max
        )

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def boxes_overlap(
    ax: float, ay: float, aw: float, ah: float, bx: float, by: float, bw: float, bh: float
) -> bool:
    """True when two centered footprints have intersecting interiors."""
    return (
        abs(ax - bx) < (aw + bw) / 2
        and abs(ay - by) < (ah + bh) / 2
    )


@dataclass
class Part:
    label: str
    x_m: float
    y_m: float
    w_m: float
    h_m: float
    zone: Zone
    assembled: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "x_m": self.x_m,
            "y_m": self.y_m,
            "w_m": self.w_m,
            "h_m": self.h_m,
            "zone": self.zone.value,
            "assembled": self.assembled,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Part":
        return cls(
            label=str(data["label"]),
            x_m=float(data["x_m"]),
            y_m=float(data["y_m"]),
            w_m=float(data["w_m"]),
            h_m=float(data["h_m"]),
            zone=Zone(data["zone"]),
            assembled=bool(data.get("assembled", False)),
        )


@dataclass(frozen=True)
class CameraConfig:
    """Fixed top-down orthographic meters-to-pixels mapping."""

    origin_x_m: float = 0.0
    origin_y_m: float = 0.0
    px_per_m: float = 800.0
    frame_width: int = 1920
    frame_height: int = 1080

    def project(self, x_m: float, y_m: float) -> tuple[float, float]:
        return (
            (x_m - self.origin_x_m) * self.px_per_m,
            (y_m - self.origin_y_m) * self.px_per_m,
        )

    def to_dict(self) -> dict:
        return {
            "origin_x_m": self.origin_x_m,
            "origin_y_m": self.origin_y_m,
            "px_per_m": self.px_per_m,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraConfig":
        return cls(
            origin_x_m=float(data["origin_x_m"]),
            origin_y_m=float(data["origin_y_m"]),
            px_per_m=float(data["px_per_m"]),
            frame_width=int(data["frame_width"]),
            frame_height=int(data["frame_height"]),
        )


@dataclass(frozen=True)
class NoiseConfig:
    jitter_px: float = 0.0
    dropout_p: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_px < 0 or not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("jitter_px must be >= 0 and dropout_p in [0,1]")

    def to_dict(self) -> dict:
        return {"jitter_px": self.jitter_px, "dropout_p": self.dropout_p}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseConfig":
        return cls(
            jitter_px=float(data.get("jitter_px", 0.0)),
            dropout_p=float(data.get("dropout_p", 0.0)),
        )


@dataclass(frozen=True)
class RobotModel:
    speed_mps: float = 0.5
    grasp_s: float = 2.0
    place_s: float = 2.0
    home_x_m: float = 0.6
    home_y_m: float = 1.05

    def __post_init__(self) -> None:
        if self.speed_mps <= 0 or self.grasp_s <= 0 or self.place_s <= 0:
            raise ValueError("robot timing parameters must be positive")

    def to_dict(self) -> dict:
        return {
            "speed_mps": self.speed_mps,
            "grasp_s": self.grasp_s,
            "place_s": self.place_s,
            "home_x_m": self.home_x_m,
            "home_y_m": self.home_y_m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RobotModel":
        return cls(
            speed_mps=float(data["speed_mps"]),
            grasp_s=float(data["grasp_s"]),
            place_s=float(data["place_s"]),
            home_x_m=float(data["home_x_m"]),
            home_y_m=float(data["home_y_m"]),
        )


# Default table layout, in meters. Workspace sizes are placeholders, not
# measurements; at 800 px/m the default 0.1 m footprints render as 80 px
# boxes in a 1920x1080 frame.
DEFAULT_ZONES = {
    Zone.ROBOT_WORKSPACE: Rect(0.1, 0.3, 1.1, 0.9),
    Zone.SHARED: Rect(1.25, 0.4, 1.65, 0.8),
    Zone.USER_STATION: Rect(1.75, 0.35, 2.35, 0.75),
}
DEFAULT_FOOTPRINT_M = (0.1, 0.1)
DEFAULT_PRODUCT_POSE = (2.05, 0.65)


def _grid_slots(rect: Rect, w: float, h: float, pitch: float) -> list[tuple[float, float]]:
    """Deterministic row-major grid of non-overlapping poses inside a rect."""
    slots = []
    y = rect.y_min + h / 2 + 0.02
    while y + h / 2 <= rect.y_max:
        x = rect.x_min + w / 2 + 0.02
        while x + w / 2 <= rect.x_max:
            slots.append((round(x, 6), round(y, 6)))
            x += pitch
        y += pitch
    return slots


@dataclass
class Scene:
    """Snapshot of the whole simulated table."""

    zones: dict[Zone, Rect]
    parts: list[Part]
    robot_home: tuple[float, float]
    drop_slots: list[tuple[float, float]]
    product_pose: tuple[float, float]
    cameras: dict[Viewpoint, CameraConfig]

    def part(self, label: str) -> Part:
        for part in self.parts:
            if part.label == label:
                return part
        raise KeyError(label)

    def visible_parts(self, viewpoint: Viewpoint) -> list[Part]:
        zones = VISIBLE_ZONES[viewpoint]
        return [p for p in self.parts if p.zone in zones]

    def validate_placement(self) -> None:
        """Check footprints sit inside their zones and do not overlap.

        Parts already assembled into the product are exempt: a finished gear
        stack physically co-locates on its peg.
        """
        loose = [p for p in self.parts if not p.assembled]
        for part in loose:
            if not self.zones[part.zone].contains_box(
                part.x_m, part.y_m, part.w_m, part.h_m
            ):
                raise SimError(f"part {part.label!r} escapes zone {part.zone.value}")
        for i, a in enumerate(loose):
            for b in loose[i + 1 :]:
                if boxes_overlap(
                    a.x_m, a.y_m, a.w_m, a.h_m, b.x_m, b.y_m, b.w_m, b.h_m
                ):
                    raise SimError(f"parts {a.label!r} and {b.label!r} overlap")

    def to_dict(self) -> dict:
        return {
            "zones": {z.value: r.as_list() for z, r in self.zones.items()},
            "parts": [p.to_dict() for p in self.parts],
            "robot_home": list(self.robot_home),
            "drop_slots": [list(s) for s in self.drop_slots],
            "product_pose": list(self.product_pose),
            "cameras": {v.value: c.to_dict() for v, c in self.cameras.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        return cls(
            zones={Zone(z): Rect(*r) for z, r in data["zones"].items()},
            parts=[Part.from_dict(p) for p in data["parts"]],
            robot_home=tuple(data["robot_home"]),
            drop_slots=[tuple(s) for s in data["drop_slots"]],
            product_pose=tuple(data["product_pose"]),
            cameras={
                Viewpoint(v): CameraConfig.from_dict(c)
                for v, c in data["cameras"].items()
            },
        )


MAX_PLACEMENT_ATTEMPTS = 10_000


def randomize_scene(
    plan: AssemblyPlan,
    seed: int,
    zones: dict[Zone, Rect] | None = None,
    footprint_m: tuple[float, float] = DEFAULT_FOOTPRINT_M,
    cameras: dict[Viewpoint, CameraConfig] | None = None,
    robot: RobotModel | None = None,
) -> Scene:
    """Lay out the plan's parts: fixed user-station slots, randomized robot side.

    Robot-fetched parts land uniformly at random inside the robot workspace,
    rejection-sampled against overlap. The same seed always produces the same
    scene.
    """
    zones = dict(zones or DEFAULT_ZONES)
    cameras = dict(cameras or {vp: CameraConfig() for vp in Viewpoint})
    robot = robot or RobotModel()
    w, h = footprint_m
    rng = random.Random(seed)

    station_slots = _grid_slots(zones[Zone.USER_STATION], w, h, pitch=w + 0.02)
    parts: list[Part] = []
    station_index = 0
    for step in plan.steps:
        if step.source is not StepSource.USER_STATION:
            continue
        if station_index >= len(station_slots):
            raise CapacityError("user station has no free slot left")
        x, y = station_slots[station_index]
        station_index += 1
        parts.append(Part(step.part_label, x, y, w, h, Zone.USER_STATION))

    workspace = zones[Zone.ROBOT_WORKSPACE]
    for step in plan.steps:
        if step.source is not StepSource.ROBOT_WORKSPACE:
            continue
        for attempt in range(MAX_PLACEMENT_ATTEMPTS):
            x = rng.uniform(workspace.x_min + w / 2, workspace.x_max - w / 2)
            y = rng.uniform(workspace.y_min + h / 2, workspace.y_max - h / 2)
            if not any(
                boxes_overlap(x, y, w, h, p.x_m, p.y_m, p.w_m, p.h_m) for p in parts
            ):
                parts.append(Part(step.part_label, x, y, w, h, Zone.ROBOT_WORKSPACE))
                break
        else:
            raise CapacityError(
                f"could not place {step.part_label!r} after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )

    drop_slots = _grid_slots(zones[Zone.SHARED], w, h, pitch=w + 0.06)
    scene = Scene(
        zones=zones,
        parts=parts,
        robot_home=(robot.home_x_m, robot.home_y_m),
        drop_slots=drop_slots,
        product_pose=DEFAULT_PRODUCT_POSE,
        cameras=cameras,
    )
    scene.validate_placement()
    return scene


def project_part_box(part: Part, camera: CameraConfig) -> tuple[float, float, float, float]:
    x0, y0 = camera.project(part.x_m - part.w_m / 2, part.y_m - part.h_m / 2)
    x1, y1 = camera.project(part.x_m + part.w_m / 2, part.y_m + part.h_m / 2)
    return x0, y0, x1, y1


def render_detections(
    scene: Scene,
    viewpoint: Viewpoint,
    noise: NoiseConfig = NoiseConfig(),
    rng: random.Random | None = None,
    timestamp_us: int = 0,
) -> DetectionFrame:
    """Synthesize one detection frame for a viewpoint; no vision model runs.

    Corners are the projected footprint plus optional Gaussian jitter; each
    box may drop out independently. Confidence carries the dropout model's
    noise floor (1 - dropout_p).
    """
    camera = scene.cameras[viewpoint]
    if (noise.jitter_px > 0 or noise.dropout_p > 0) and rng is None:
        raise ValueError("noisy rendering needs an rng for reproducibility")
    boxes = []
    confidence = 1.0 - noise.dropout_p
    for part in scene.visible_parts(viewpoint):
        if noise.dropout_p > 0 and rng.random() < noise.dropout_p:
            continue
        x0, y0, x1, y1 = project_part_box(part, camera)
        if noise.jitter_px > 0:
            x0 += rng.gauss(0.0, noise.jitter_px)
            y0 += rng.gauss(0.0, noise.jitter_px)
            x1 += rng.gauss(0.0, noise.jitter_px)
            y1 += rng.gauss(0.0, noise.jitter_px)
            x0, x1 = min(x0, x1), max(x0, x1)
            y0, y1 = min(y0, y1), max(y0, y1)
        x0 = max(0.0, min(float(camera.frame_width), x0))
        x1 = max(0.0, min(float(camera.frame_width), x1))
        y0 = max(0.0, min(float(camera.frame_height), y0))
        y1 = max(0.0, min(float(camera.frame_height), y1))
        if x0 >= x1 or y0 >= y1:
            continue
        boxes.append(BBox(part.label, x0, y0, x1, y1, confidence))
    return DetectionFrame(
        source=viewpoint,
        timestamp_us=timestamp_us,
        boxes=tuple(boxes),
        frame_width=camera.frame_width,
        frame_height=camera.frame_height,
    )


def scripted_gaze(
    scene: Scene,
    script: Sequence[dict],
    sigma_px: float,
    seed: int,
    config: StreamConfig | None = None,
    start_us: int = 0,
) -> list[GazeSample]:
    """Generate fixation samples: per entry, ``duration_ms`` of samples at the
    target's projected center plus isotropic Gaussian noise."""
    config = config or StreamConfig()
    camera = scene.cameras[Viewpoint.USER]
    rng = random.Random(seed)
    period = config.sample_period_us
    samples: list[GazeSample] = []
    index = 0
    for entry in script:
        try:
            label = entry["target_label"]
            duration_ms = float(entry["duration_ms"])
        except (KeyError, TypeError) as exc:
            raise ScriptError(f"bad script entry {entry!r}") from exc
        try:
            part = scene.part(label)
        except KeyError:
            raise ScriptError(f"script targets unknown part {label!r}") from None
        if part.zone not in VISIBLE_ZONES[Viewpoint.USER]:
            raise ScriptError(f"part {label!r} is outside the user viewpoint")
        cx, cy = camera.project(part.x_m, part.y_m)
        count = round(duration_ms / 1000.0 * config.sample_rate_hz)
        for _ in range(count):
            x, y = cx, cy
            if sigma_px > 0:
                x += rng.gauss(0.0, sigma_px)
                y += rng.gauss(0.0, sigma_px)
            samples.append(GazeSample(start_us + index * period, x, y, True))
            index += 1
    return samples


class SimClock:
    """Monotone microsecond clock advanced only by step()."""

    def __init__(self, tick_us: int = 10_000, start_us: int = 0):
        if tick_us <= 0:
            raise ValueError("tick_us must be positive")
        self.tick_us = tick_us
        self.now_us = start_us

    def step(self, dt_us: int | None = None) -> int:
        dt = self.tick_us if dt_us is None else dt_us
        if dt <= 0 or dt % self.tick_us != 0:
            raise ValueError(f"dt_us must be a positive multiple of {self.tick_us}")
        self.now_us += dt
        return self.now_us


@dataclass(frozen=True)
class WorldEvent:
    timestamp_us: int
    kind: RobotEvent
    label: str


@dataclass
class _Fetch:
    label: str
    t_command: int
    t_arrive: int
    t_pickup: int
    t_deliver: int
    t_place_done: int
    t_return: int
    part_start: tuple[float, float]
    slot: tuple[float, float]
    slot_index: int


def _us(seconds: float) -> int:
    return round(seconds * 1_000_000)


class SimWorld:
    """Steps the robot and the simulated user through time.

    The fetch timeline is travel / grasp / travel / place / travel, computed
    up front from straight-line distances at command time. ``Delivered``
    fires when the arm reaches the shared zone; the part changes zone there.
    When ``auto_assemble`` is on, the simulated user picks a delivered part
    up and finishes assembling it ``assemble_s`` later (user-station parts
    are assembled at session start).
    """

    def __init__(
        self,
        scene: Scene,
        robot: RobotModel | None = None,
        clock: SimClock | None = None,
        assemble_s: float = 1.0,
        auto_assemble: bool = True,
    ):
        self.scene = scene
        self.robot = robot or RobotModel()
        self.clock = clock or SimClock()
        self.assemble_us = _us(assemble_s)
        self.auto_assemble = auto_assemble
        self._queue: list[tuple[int, int, RobotEvent, str]] = []
        self._seq = 0
        self._fetch: Optional[_Fetch] = None
        self._slots_free = list(range(len(scene.drop_slots)))
        self._slot_by_label: dict[str, int] = {}

    # -- scheduling --------------------------------------------------------

    def _schedule(self, t: int, kind: RobotEvent, label: str) -> None:
        heapq.heappush(self._queue, (t, self._seq, kind, label))
        self._seq += 1

    def start(self) -> list[WorldEvent]:
        """Session kickoff: the user's own station parts are ready to build."""
        events = []
        if self.auto_assemble:
            for part in self.scene.parts:
                if part.zone is Zone.USER_STATION and not part.assembled:
                    events.append(
                        WorldEvent(self.clock.now_us, RobotEvent.ASSEMBLED, part.label)
                    )
                    self._apply(events[-1])
        return events

    def command_fetch(self, label: str, timestamp_us: int) -> list[WorldEvent]:
        """Accept a fetch order; returns an immediate fault if impossible."""
        if self._fetch is not None:
            return [WorldEvent(timestamp_us, RobotEvent.FAULT, label)]
        try:
            part = self.scene.part(label)
        except KeyError:
            return [WorldEvent(timestamp_us, RobotEvent.FAULT, label)]
        if part.zone is not Zone.ROBOT_WORKSPACE or part.assembled:
            return [WorldEvent(timestamp_us, RobotEvent.FAULT, label)]
        if not self._slots_free:
            return [WorldEvent(timestamp_us, RobotEvent.FAULT, label)]

        slot_index = self._slots_free[0]
        slot = self.scene.drop_slots[slot_index]
        home = self.scene.robot_home
        pose = (part.x_m, part.y_m)
        v = self.robot.speed_mps
        d1 = math.dist(home, pose)
        d2 = math.dist(pose, slot)
        d3 = math.dist(slot, home)
        t_arrive = timestamp_us + _us(d1 / v)
        t_pickup = t_arrive + _us(self.robot.grasp_s)
        t_deliver = t_pickup + _us(d2 / v)
        t_place_done = t_deliver + _us(self.robot.place_s)
        t_return = t_place_done + _us(d3 / v)
        self._fetch = _Fetch(
            label, timestamp_us, t_arrive, t_pickup, t_deliver, t_place_done,
            t_return, pose, slot, slot_index,
        )
        self._slots_free.pop(0)
        self._schedule(t_pickup, RobotEvent.PICKED_UP, label)
        self._schedule(t_deliver, RobotEvent.DELIVERED, label)
        self._schedule(t_return, RobotEvent.RETURNED, label)
        return []

    def step(self, dt_us: int | None = None) -> list[WorldEvent]:
        """Advance the clock; emit and apply every event that came due."""
        now = self.clock.step(dt_us)
        events: list[WorldEvent] = []
        while self._queue and self._queue[0][0] <= now:
            t, _, kind, label = heapq.heappop(self._queue)
            event = WorldEvent(t, kind, label)
            self._apply(event)
            events.append(event)
        return events

    def _apply(self, event: WorldEvent) -> None:
        part = self.scene.part(event.label)
        if event.kind is RobotEvent.DELIVERED:
            fetch = self._fetch
            part.x_m, part.y_m = fetch.slot
            part.zone = Zone.SHARED
            self._slot_by_label[event.label] = fetch.slot_index
            if self.auto_assemble:
                self._schedule(
                    event.timestamp_us + self.assemble_us,
                    RobotEvent.ASSEMBLED,
                    event.label,
                )
        elif event.kind is RobotEvent.RETURNED:
            self._fetch = None
        elif event.kind is RobotEvent.ASSEMBLED:
            part.assembled = True
            part.zone = Zone.USER_STATION
            part.x_m, part.y_m = self.scene.product_pose
            slot = self._slot_by_label.pop(event.label, None)
            if slot is not None:
                self._slots_free.append(slot)
                self._slots_free.sort()

    # -- queries -----------------------------------------------------------

    @property
    def busy(self) -> bool:
        return self._fetch is not None

    @property
    def events_pending(self) -> bool:
        return bool(self._queue)

    def robot_position(self, t_us: int | None = None) -> tuple[float, float]:
        """Arm position for display, piecewise-linear along the fetch legs."""
        t = self.clock.now_us if t_us is None else t_us
        fetch = self._fetch
        home = self.scene.robot_home
        if fetch is None or t <= fetch.t_command:
            return home
        if t >= fetch.t_return:
            return home
        legs = [
            (fetch.t_command, fetch.t_arrive, home, fetch.part_start),
            (fetch.t_arrive, fetch.t_pickup, fetch.part_start, fetch.part_start),
            (fetch.t_pickup, fetch.t_deliver, fetch.part_start, fetch.slot),
            (fetch.t_deliver, fetch.t_place_done, fetch.slot, fetch.slot),
            (fetch.t_place_done, fetch.t_return, fetch.slot, home),
        ]
        for t0, t1, p0, p1 in legs:
            if t0 <= t <= t1:
                if t1 == t0:
                    return p1
                f = (t - t0) / (t1 - t0)
                return (p0[0] + (p1[0] - p0[0]) * f, p0[1] + (p1[1] - p0[1]) * f)
        return home

    def fetch_duration_us(self, label: str, slot: tuple[float, float]) -> int:
        """Independent restatement of the full-cycle timing for a would-be fetch."""
        part = self.scene.part(label)
        home = self.scene.robot_home
        v = self.robot.speed_mps
        d1 = math.dist(home, (part.x_m, part.y_m))
        d2 = math.dist((part.x_m, part.y_m), slot)
        d3 = math.dist(slot, home)
        return (
            _us(d1 / v)
            + _us(self.robot.grasp_s)
            + _us(d2 / v)
            + _us(self.robot.place_s)
            + _us(d3 / v)
        )
