import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazefetch.gaze import GazeSample
from gazefetch.perception import BBox, DetectionFrame, Viewpoint
from gazefetch.protocol import (
    MessageType,
    ProtocolError,
    TraceReader,
    TraceWriter,
    WireMessage,
    decode,
    encode,
    gaze_sample_payload,
    is_replay_input,
    is_world_event,
    parse_detection_frame,
    parse_gaze_sample,
    robot_event_payload,
    robot_phase_payload,
)

json_scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(-(2**31), 2**31),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=20),
)
json_payloads = st.dictionaries(
    st.text(min_size=1, max_size=12),
    st.one_of(json_scalars, st.lists(json_scalars, max_size=4)),
    max_size=6,
)


@settings(max_examples=200, deadline=None)
@given(
    mtype=st.sampled_from(list(MessageType)),
    seq=st.integers(0, 2**40),
    payload=json_payloads,
)
def test_encode_decode_identity(mtype, seq, payload):
    message = WireMessage(mtype, seq, payload)
    line = encode(message)
    assert "\n" not in line
    assert decode(line) == message


def test_every_type_round_trips():
    for mtype in MessageType:
        msg = WireMessage(mtype, 3, {"k": 1})
        assert decode(encode(msg)) == msg


class TestDecodeErrors:
    def test_malformed_json(self):
        with pytest.raises(ProtocolError, match="malformed"):
            decode("{nope")

    def test_unknown_type(self):
        with pytest.raises(ProtocolError, match="unknown message type"):
            decode(json.dumps({"type": "TELEPATHY", "seq": 0, "payload": {}}))

    def test_missing_seq(self):
        with pytest.raises(ProtocolError, match="seq"):
            decode(json.dumps({"type": "HELLO", "payload": {}}))

    def test_missing_payload(self):
        with pytest.raises(ProtocolError, match="payload"):
            decode(json.dumps({"type": "HELLO", "seq": 0}))

    def test_non_object(self):
        with pytest.raises(ProtocolError):
            decode("[1,2,3]")


class TestPayloadCodecs:
    def test_gaze_sample_roundtrip(self):
        sample = GazeSample(123, 4.5, 6.7, True)
        assert parse_gaze_sample(gaze_sample_payload(sample)) == sample

    def test_gaze_sample_bad_payload(self):
        with pytest.raises(ProtocolError):
            parse_gaze_sample({"x": 1.0})

    def test_detection_frame_roundtrip(self):
        frame = DetectionFrame(
            Viewpoint.ROBOT, 55, (BBox("a", 1, 2, 3, 4, 0.9),), 100, 100
        )
        assert parse_detection_frame(frame.to_dict()) == frame

    def test_world_event_vs_phase_broadcast(self):
        world = WireMessage(
            MessageType.ROBOT_STATE, 0, robot_event_payload("PickedUp", "gear_large", 5)
        )
        phase = WireMessage(
            MessageType.ROBOT_STATE, 1, robot_phase_payload("RETRIEVING", 5)
        )
        assert is_world_event(world) and not is_world_event(phase)
        assert is_replay_input(world) and not is_replay_input(phase)

    def test_announcements_are_not_replay_inputs(self):
        msg = WireMessage(MessageType.ANNOUNCEMENT, 0, {"kind": "SELECTED"})
        assert not is_replay_input(msg)
        assert is_replay_input(WireMessage(MessageType.GAZE_SAMPLE, 0, {}))


class TestTraceFiles:
    def test_header_first_then_records(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.write_header({"plan_id": "p", "seed": 1})
            writer.append(WireMessage(MessageType.GAZE_SAMPLE, 0, {"x": 1}), 10)
        records = list(TraceReader(path))
        assert records[0].message.type is MessageType.CONFIG
        assert records[0].arrival_us == 0
        assert records[1].message.type is MessageType.GAZE_SAMPLE
        assert records[1].arrival_us == 10

    def test_double_header_rejected(self, tmp_path):
        with TraceWriter(tmp_path / "t.jsonl") as writer:
            writer.write_header({})
            with pytest.raises(ProtocolError):
                writer.write_header({})

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.append(WireMessage(MessageType.GAZE_SAMPLE, 0, {}), 0)
        with pytest.raises(ProtocolError, match="header"):
            list(TraceReader(path))

    def test_truncated_file_flagged(self, tmp_path):
        path = tmp_path / "t.jsonl"
        with TraceWriter(path) as writer:
            writer.write_header({"plan_id": "p"})
            writer.append(WireMessage(MessageType.GAZE_SAMPLE, 0, {"x": 1}), 10)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write('{"arrival_us": 20, "type": "GAZE_SA')  # torn line
        reader = TraceReader(path)
        records = list(reader)
        assert len(records) == 2
        assert reader.truncated
