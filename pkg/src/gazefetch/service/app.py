"""FastAPI application wrapping one live gateway session."""

from __future__ import annotations

from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from ..config import WS_PATH, ServiceConfig
from ..protocol import MessageType, WireMessage
from .gateway import GatewayServer
from .schemas import (
    AnnouncementModel,
    HealthResponse,
    MetricsModel,
    PartModel,
    PlanResponse,
    StateResponse,
    StepModel,
    TouchBody,
    TouchResponse,
)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    gateway = GatewayServer(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await gateway.start()
        try:
            yield
        finally:
            await gateway.stop()

    app = FastAPI(title="gazefetch gateway", lifespan=lifespan)
    app.state.gateway = gateway

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok", plan_id=gateway.plan.plan_id, now_us=gateway.clock.now_us
        )

    @app.get("/api/state", response_model=StateResponse)
    def state():
        snapshot = gateway.build_snapshot(gateway.clock.now_us)
        orch = gateway.engine.orchestrator
        metrics = gateway.current_metrics()
        return StateResponse(
            plan_id=gateway.plan.plan_id,
            phase=orch.phase.value,
            now_us=gateway.clock.now_us,
            delivered=snapshot["delivered"],
            assembled=snapshot["assembled"],
            announcements=[
                AnnouncementModel(
                    kind=a.kind.value, text=a.text, timestamp_us=a.timestamp_us
                )
                for a in gateway.announcements[-5:]
            ],
            parts=[
                PartModel(
                    label=p["label"],
                    zone=p["zone"],
                    assembled=p["assembled"],
                    x_min=p["bbox"]["x_min"],
                    y_min=p["bbox"]["y_min"],
                    x_max=p["bbox"]["x_max"],
                    y_max=p["bbox"]["y_max"],
                )
                for p in snapshot["parts"]
            ],
            metrics=MetricsModel(**metrics.to_dict()),
        )

    @app.get("/api/plan", response_model=PlanResponse)
    def plan():
        doc = gateway.plan.to_dict()
        return PlanResponse(
            plan_id=doc["plan_id"], steps=[StepModel(**s) for s in doc["steps"]]
        )

    @app.get("/api/metrics", response_model=MetricsModel)
    def metrics():
        return MetricsModel(**gateway.current_metrics().to_dict())

    @app.post("/api/touch", response_model=TouchResponse)
    async def touch(body: TouchBody):
        known = body.label in gateway.plan.part_labels
        outputs = await gateway.submit(
            WireMessage(
                MessageType.TOUCH_REQUEST,
                0,
                {"label": body.label, "timestamp_us": gateway.clock.now_us},
            )
        )
        announcement: Optional[AnnouncementModel] = None
        faults = []
        for message in outputs:
            if message.type is MessageType.ANNOUNCEMENT and announcement is None:
                announcement = AnnouncementModel(
                    kind=message.payload["kind"],
                    text=message.payload["text"],
                    timestamp_us=message.payload["timestamp_us"],
                )
            elif message.type is MessageType.FAULT:
                faults.append(message.payload.get("reason", ""))
        if announcement is None and not known:
            raise HTTPException(status_code=404, detail=f"unknown part {body.label!r}")
        return TouchResponse(announcement=announcement, faults=faults)

    @app.websocket(WS_PATH)
    async def gear_socket(websocket: WebSocket):
        await websocket.accept()

        async def send(line: str) -> None:
            await websocket.send_text(line)

        conn = gateway.register(send)
        try:
            while True:
                text = await websocket.receive_text()
                # A frame may carry several newline-separated messages; the
                # payload bytes are identical to the raw-socket transport.
                keep = True
                for line in text.split("\n"):
                    if line.strip():
                        keep = await gateway.handle_line(conn, line)
                        if not keep:
                            break
                if not keep:
                    await websocket.close(code=1002, reason="protocol violation")
                    break
        except WebSocketDisconnect:
            pass
        finally:
            gateway.unregister(conn)

    console_dir = config.console_dir
    if console_dir and Path(console_dir).is_dir():
        app.mount(
            "/console", StaticFiles(directory=console_dir, html=True), name="console"
        )

    return app
