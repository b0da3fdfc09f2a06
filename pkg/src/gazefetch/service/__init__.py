"""Live gateway: FastAPI app, WebSocket + raw TCP transports, REST views."""

from .app import create_app

__all__ = ["create_app"]
