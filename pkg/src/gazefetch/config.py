"""Engine and service configuration.

Defaults live here; a JSON config file (or the GEAR_CONFIG env var pointing
at one) overrides them field by field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .gaze import StreamConfig
from .orchestrator import OrchestratorConfig
from .sim import NoiseConfig, RobotModel

CONFIG_ENV_VAR = "GEAR_CONFIG"

DEFAULT_TCP_PORT = 7420
DEFAULT_HTTP_PORT = 7421
WS_PATH = "/gear"


@dataclass(frozen=True)
class EngineConfig:
    """Everything one session needs besides the plan and the seed."""

    stream: StreamConfig = field(default_factory=StreamConfig)
    dwell_threshold: int = 1
    refractory_s: float = 2.0
    frame_staleness_s: float = 0.2
    min_confidence: float = 0.0
    tick_us: int = 10_000
    detector_hz: float = 10.0
    robot: RobotModel = field(default_factory=RobotModel)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    assemble_s: float = 1.0
    max_session_s: float = 600.0

    def orchestrator_config(self) -> OrchestratorConfig:
        return OrchestratorConfig(
            dwell_threshold=self.dwell_threshold,
            refractory_us=round(self.refractory_s * 1_000_000),
            frame_staleness_us=round(self.frame_staleness_s * 1_000_000),
            min_confidence=self.min_confidence,
        )

    @property
    def detector_period_us(self) -> int:
        return round(1_000_000 / self.detector_hz)

    def to_dict(self) -> dict:
        return {
            "stream": self.stream.to_dict(),
            "dwell_threshold": self.dwell_threshold,
            "refractory_s": self.refractory_s,
            "frame_staleness_s": self.frame_staleness_s,
            "min_confidence": self.min_confidence,
            "tick_us": self.tick_us,
            "detector_hz": self.detector_hz,
            "robot": self.robot.to_dict(),
            "noise": self.noise.to_dict(),
            "assemble_s": self.assemble_s,
            "max_session_s": self.max_session_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        base = cls()
        kwargs = {}
        if "stream" in data:
            kwargs["stream"] = StreamConfig.from_dict(data["stream"])
        if "robot" in data:
            kwargs["robot"] = RobotModel.from_dict(data["robot"])
        if "noise" in data:
            kwargs["noise"] = NoiseConfig.from_dict(data["noise"])
        for name in (
            "dwell_threshold",
            "refractory_s",
            "frame_staleness_s",
            "min_confidence",
            "tick_us",
            "detector_hz",
            "assemble_s",
            "max_session_s",
        ):
            if name in data:
                kwargs[name] = data[name]
        return replace(base, **kwargs)


@dataclass(frozen=True)
class ServiceConfig:
    """Live gateway settings on top of the engine config."""

    engine: EngineConfig = field(default_factory=EngineConfig)
    plan: str = "gear_assembly"
    seed: int = 7
    host: str = "127.0.0.1"
    http_port: int = DEFAULT_HTTP_PORT
    tcp_port: int = DEFAULT_TCP_PORT
    snapshot_hz: float = 10.0
    trace_path: Optional[str] = None
    console_dir: Optional[str] = "frontend"

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        base = cls()
        kwargs = {}
        if "engine" in data:
            kwargs["engine"] = EngineConfig.from_dict(data["engine"])
        for name in (
            "plan",
            "seed",
            "host",
            "http_port",
            "tcp_port",
            "snapshot_hz",
            "trace_path",
            "console_dir",
        ):
            if name in data:
                kwargs[name] = data[name]
        return replace(base, **kwargs)


def load_config(path: str | Path | None = None) -> ServiceConfig:
    """Load service config from a file, the GEAR_CONFIG env var, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return ServiceConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return ServiceConfig.from_dict(json.load(fh))
