"""
Tests for the wire encodings
"""

import struct

import numpy as np
import pytest

from models.artefact import Report, TrackId
from models.frame import Frame, FrameId
from models.geometry import Pose2
from models.message import Manifest, MessageId, QoS, StoredMessage, StreamHoldings
from models.task import Task, TaskId, TaskKind, TaskState
from services.codecs import (
    MSG_REQUEST,
    CodecError,
    as_f32,
    decode_costmap,
    decode_data,
    decode_frame,
    decode_manifest,
    decode_report,
    decode_request,
    decode_task,
    encode_data,
    encode_frame,
    encode_manifest,
    encode_report,
    encode_request,
    encode_task,
    message_type,
)

TOPICS = {"frames": 1, "tasks": 2}
NAMES = {v: k for k, v in TOPICS.items()}


class TestFrames:
    def test_size_matches_declared_bytes(self):
        frame = Frame(FrameId(3, 9), 1.0, 2.0, Pose2(0.5, 0.0, 0.1), 0.01, 0.002, np.ones((5, 2)))

        data = encode_frame(frame)

        assert len(data) == frame.size_bytes
        decoded = decode_frame(data)
        assert decoded.id == FrameId(3, 9)
        assert decoded.features.shape == (5, 2)
        assert decoded.delta.x == 0.5

    def test_feature_count_mismatch(self):
        data = encode_frame(Frame(FrameId(1, 1), 0.0, 1.0, Pose2(), 0.0, 0.0, np.zeros((2, 2))))

        with pytest.raises(CodecError, match="feature count"):
            decode_frame(data[:-4])

    def test_truncated_header(self):
        with pytest.raises(CodecError, match="truncated"):
            decode_frame(b"\x01\x00")


class TestMuleProtocol:
    """Manifest, request and data messages"""

    def test_manifest_with_sparse_extras(self):
        manifest = Manifest(sender=2, streams={(1, "frames"): StreamHoldings(4, (7, 9))})

        data = encode_manifest(manifest, TOPICS.get)
        decoded = decode_manifest(data, 2, 5.0, NAMES.get)

        assert decoded.streams == manifest.streams
        assert decoded.holds(MessageId(1, "frames", 9))
        assert message_type(data) == 1

    def test_request_type_checked(self):
        data = encode_request([MessageId(1, "tasks", 3)], TOPICS.get)

        assert message_type(data) == MSG_REQUEST
        assert decode_request(data, NAMES.get) == [MessageId(1, "tasks", 3)]
        with pytest.raises(CodecError, match="expected manifest"):
            decode_manifest(data, 1, 0.0, NAMES.get)

    def test_data_length_checked(self):
        message = StoredMessage(MessageId(1, "frames", 1), QoS.PERSISTENT, b"payload", 0.0)
        data = encode_data(message, TOPICS.get)

        assert decode_data(data, 3.0, NAMES.get).payload == b"payload"
        with pytest.raises(CodecError, match="length mismatch"):
            decode_data(data + b"x", 3.0, NAMES.get)

    def test_empty_payload(self):
        with pytest.raises(CodecError):
            message_type(b"")


class TestTaskRows:
    def test_failures_share_the_state_byte(self):
        task = Task(
            TaskId(2, 5), TaskKind.DROP_NODE, FrameId(2, 3), (1.5, -2.0), 50.0, 2,
            version=4, state=TaskState.CLAIMED, owner=3, bid=12.5, failures=2,
        )

        decoded = decode_task(encode_task(task))

        assert decoded.state == TaskState.CLAIMED
        assert decoded.failures == 2
        assert decoded.version == 4
        assert decoded.bid == 12.5

    def test_invalid_tier(self):
        data = bytearray(encode_task(Task(TaskId(1, 1), TaskKind.EXPLORE, FrameId(1, 1), (0.0, 0.0), 20.0, 2)))
        # tier byte follows kind, two coordinates and the reward
        data[12 + 1 + 12] = 7

        with pytest.raises(CodecError, match="invalid tier 7"):
            decode_task(bytes(data))


class TestReports:
    def test_point_is_float32(self):
        report = Report(TrackId(1, 2), "backpack", FrameId(1, 7), (1.1, 2.2), 0.5, 3, 40.0)

        decoded = decode_report(encode_report(report))

        assert decoded.point == (as_f32(1.1), as_f32(2.2))
        assert decoded.label == "backpack"

    def test_unknown_class_index(self):
        data = bytearray(encode_report(Report(TrackId(1, 2), "gas", FrameId(1, 7), (0.0, 0.0), 0.5, 1, 0.0)))
        data[6] = 200

        with pytest.raises(CodecError, match="unknown artefact class"):
            decode_report(bytes(data))


class TestCostmaps:
    def test_size_mismatch(self):
        data = struct.pack("<HI", 1, 1) + struct.pack("<HHhh", 2, 2, 0, 0) + b"\x0a\x0a\x0a"

        with pytest.raises(CodecError, match="size mismatch"):
            decode_costmap(data)
