"""Raw stream-socket transport: same NDJSON bytes as the WebSocket."""

import asyncio

from gazefetch.config import EngineConfig, ServiceConfig
from gazefetch.protocol import PROTOCOL_VERSION, MessageType, WireMessage, decode, encode
from gazefetch.service.gateway import GatewayServer


def run_gateway_scenario(scenario, tmp_path=None, **config_kwargs):
    async def runner():
        config = ServiceConfig(
            engine=EngineConfig(),
            plan="gear_assembly",
            seed=7,
            tcp_port=0,  # ephemeral
            trace_path=str(tmp_path / "trace.jsonl") if tmp_path else None,
            console_dir=None,
            **config_kwargs,
        )
        gateway = GatewayServer(config)
        await gateway.start()
        try:
            port = gateway._tcp_server.sockets[0].getsockname()[1]
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            try:
                await scenario(gateway, reader, writer)
            finally:
                writer.close()
        finally:
            await gateway.stop()

    asyncio.run(runner())


async def send(writer, message):
    writer.write((encode(message) + "\n").encode("utf-8"))
    await writer.drain()


async def recv(reader):
    line = await asyncio.wait_for(reader.readline(), timeout=10)
    assert line, "connection closed unexpectedly"
    return decode(line.decode("utf-8"))


async def recv_until(reader, mtype, limit=400):
    for _ in range(limit):
        message = await recv(reader)
        if message.type is mtype:
            return message
    raise AssertionError(f"never received {mtype}")


def test_tcp_handshake_and_pointer_selection(tmp_path):
    async def scenario(gateway, reader, writer):
        await send(
            writer,
            WireMessage(
                MessageType.HELLO,
                0,
                {"version": PROTOCOL_VERSION, "role": "console", "name": "tcp-test"},
            ),
        )
        reply = await recv(reader)
        assert reply.type is MessageType.HELLO
        config_msg = await recv(reader)
        assert config_msg.type is MessageType.CONFIG

        snapshot = await recv_until(reader, MessageType.SCENE_SNAPSHOT)
        target = next(
            p for p in snapshot.payload["parts"] if p["label"] == "gear_large"
        )
        cx = (target["bbox"]["x_min"] + target["bbox"]["x_max"]) / 2
        cy = (target["bbox"]["y_min"] + target["bbox"]["y_max"]) / 2
        for i in range(15):
            await send(
                writer,
                WireMessage(
                    MessageType.GAZE_SAMPLE,
                    i + 1,
                    {"timestamp_us": i, "x": cx, "y": cy, "valid": True},
                ),
            )
        announcement = await recv_until(reader, MessageType.ANNOUNCEMENT)
        assert announcement.payload["kind"] == "SELECTED"
        assert announcement.payload["text"] == "Object gear_large selected; Bringing now"

    run_gateway_scenario(test := scenario, tmp_path)


def test_tcp_version_mismatch_closes_connection(tmp_path):
    async def scenario(gateway, reader, writer):
        await send(
            writer,
            WireMessage(MessageType.HELLO, 0, {"version": 42, "role": "x", "name": "y"}),
        )
        fault = await recv(reader)
        assert fault.type is MessageType.FAULT
        assert "version" in fault.payload["reason"]
        eof = await asyncio.wait_for(reader.readline(), timeout=10)
        assert eof == b""  # server closed with reason

    run_gateway_scenario(scenario, tmp_path)


def test_tcp_malformed_line_fault_keeps_connection(tmp_path):
    async def scenario(gateway, reader, writer):
        await send(
            writer,
            WireMessage(
                MessageType.HELLO,
                0,
                {"version": PROTOCOL_VERSION, "role": "console", "name": "t"},
            ),
        )
        await recv(reader)  # HELLO
        await recv(reader)  # CONFIG
        writer.write(b"not json at all\n")
        await writer.drain()
        fault = await recv_until(reader, MessageType.FAULT)
        assert fault.payload["line"] == 2
        # Connection still works afterwards.
        await send(
            writer,
            WireMessage(
                MessageType.GAZE_SAMPLE,
                1,
                {"timestamp_us": 0, "x": 1.0, "y": 1.0, "valid": True},
            ),
        )
        await recv_until(reader, MessageType.SCENE_SNAPSHOT)

    run_gateway_scenario(scenario, tmp_path)


def test_gaze_samples_processed_in_seq_order(tmp_path):
    async def scenario(gateway, reader, writer):
        await send(
            writer,
            WireMessage(
                MessageType.HELLO,
                0,
                {"version": PROTOCOL_VERSION, "role": "console", "name": "t"},
            ),
        )
        await recv(reader)
        await recv(reader)
        for i in range(30):
            await send(
                writer,
                WireMessage(
                    MessageType.GAZE_SAMPLE,
                    i + 1,
                    {"timestamp_us": i, "x": 5.0, "y": 5.0, "valid": True},
                ),
            )
        # Give the consumer a moment, then check the engine saw a strictly
        # increasing stream with no fault records.
        for _ in range(50):
            await asyncio.sleep(0.01)
            if len(gateway.engine.window) >= 15:
                break
        assert not any(r.kind == "fault" for r in gateway.engine.log)

    run_gateway_scenario(scenario, tmp_path)
