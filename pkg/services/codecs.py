"""
Bit-exact little-endian wire encodings for every payload that rides on Mule
"""

import struct
from typing import Callable, Dict, List, Tuple

import numpy as np

from models.artefact import Report, TrackId
from models.frame import Frame, FrameId, Hint
from models.frontier import Frontier, FrontierKind
from models.geometry import Pose2
from models.message import Manifest, MessageId, QoS, StoredMessage, StreamHoldings
from models.task import Task, TaskId, TaskKind, TaskState
from models.topomap import CostmapBundle
from models.world import ARTEFACT_CLASSES

MSG_MANIFEST = 1
MSG_REQUEST = 2
MSG_DATA = 3

_MESSAGE_ID = struct.Struct("<HHQ")
_FRAME_ID = struct.Struct("<HI")
_TASK_ID = struct.Struct("<HI")
_STREAM = struct.Struct("<HHQH")
_FRAME_HEADER = struct.Struct("<dd3d2dH")
_FRONTIER_HEADER = struct.Struct("<BH")
_TASK_BODY = struct.Struct("<B2ffBIBHff")


class CodecError(Exception):
    """Raised when a wire payload is malformed"""


def as_f32(value: float) -> float:
    """Round a float to the nearest float32 (what survives the wire)."""
    return float(np.float32(value))


def _check(condition: bool, message: str):
    if not condition:
        raise CodecError(message)


def _unpack(fmt: struct.Struct, data: bytes, offset: int):
    try:
        return fmt.unpack_from(data, offset), offset + fmt.size
    except struct.error as e:
        raise CodecError(f"truncated payload at offset {offset}: {e}")


# --- Mule protocol -----------------------------------------------------------


def encode_message_id(message_id: MessageId, topic_hash: Callable[[str], int]) -> bytes:
    return _MESSAGE_ID.pack(message_id.origin, topic_hash(message_id.topic), message_id.seq)


def encode_manifest(manifest: Manifest, topic_hash: Callable[[str], int]) -> bytes:
    parts = [struct.pack("<BH", MSG_MANIFEST, len(manifest.streams))]
    for (origin, topic) in sorted(manifest.streams):
        stream = manifest.streams[(origin, topic)]
        parts.append(_STREAM.pack(origin, topic_hash(topic), stream.watermark, len(stream.extras)))
        parts.append(struct.pack(f"<{len(stream.extras)}Q", *stream.extras))
    return b"".join(parts)


def decode_manifest(
    data: bytes, sender: int, time: float, topic_name: Callable[[int], str]
) -> Manifest:
    (msg_type, count), offset = _unpack(struct.Struct("<BH"), data, 0)
    _check(msg_type == MSG_MANIFEST, f"expected manifest, got type {msg_type}")
    streams: Dict[Tuple[int, str], StreamHoldings] = {}
    for _ in range(count):
        (origin, topic_hash, watermark, n_extras), offset = _unpack(_STREAM, data, offset)
        extras, offset = _unpack(struct.Struct(f"<{n_extras}Q"), data, offset)
        streams[(origin, topic_name(topic_hash))] = StreamHoldings(watermark, tuple(extras))
    _check(offset == len(data), "trailing bytes after manifest")
    return Manifest(sender=sender, time=time, streams=streams)


def encode_request(ids: List[MessageId], topic_hash: Callable[[str], int]) -> bytes:
    return struct.pack("<BH", MSG_REQUEST, len(ids)) + b"".join(
        encode_message_id(i, topic_hash) for i in ids
    )


def decode_request(data: bytes, topic_name: Callable[[int], str]) -> List[MessageId]:
    (msg_type, count), offset = _unpack(struct.Struct("<BH"), data, 0)
    _check(msg_type == MSG_REQUEST, f"expected request, got type {msg_type}")
    ids = []
    for _ in range(count):
        (origin, topic_hash, seq), offset = _unpack(_MESSAGE_ID, data, offset)
        ids.append(MessageId(origin, topic_name(topic_hash), seq))
    _check(offset == len(data), "trailing bytes after request")
    return ids


def encode_data(message: StoredMessage, topic_hash: Callable[[str], int]) -> bytes:
    return (
        struct.pack("<B", MSG_DATA)
        + encode_message_id(message.id, topic_hash)
        + struct.pack("<BI", int(message.qos), len(message.payload))
        + message.payload
    )


def decode_data(data: bytes, created: float, topic_name: Callable[[int], str]) -> StoredMessage:
    (msg_type,), offset = _unpack(struct.Struct("<B"), data, 0)
    _check(msg_type == MSG_DATA, f"expected data, got type {msg_type}")
    (origin, topic_hash, seq), offset = _unpack(_MESSAGE_ID, data, offset)
    (qos, length), offset = _unpack(struct.Struct("<BI"), data, offset)
    _check(offset + length == len(data), "data length mismatch")
    try:
        qos = QoS(qos)
    except ValueError:
        raise CodecError(f"unknown qos {qos}")
    return StoredMessage(
        id=MessageId(origin, topic_name(topic_hash), seq),
        qos=qos,
        payload=bytes(data[offset:]),
        created=created,
    )


def message_type(data: bytes) -> int:
    _check(len(data) > 0, "empty payload")
    return data[0]


# --- Atlas -------------------------------------------------------------------


def encode_frame_id(frame_id: FrameId) -> bytes:
    return _FRAME_ID.pack(frame_id.agent, frame_id.seq)


def decode_frame_id(data: bytes, offset: int = 0) -> Tuple[FrameId, int]:
    (agent, seq), offset = _unpack(_FRAME_ID, data, offset)
    return FrameId(agent, seq), offset


def encode_frame(frame: Frame) -> bytes:
    points = np.asarray(frame.features, dtype="<f4").reshape(-1, 2)
    return (
        encode_frame_id(frame.id)
        + _FRAME_HEADER.pack(
            frame.t_start,
            frame.t_end,
            frame.delta.x,
            frame.delta.y,
            frame.delta.theta,
            frame.sigma_xy,
            frame.sigma_theta,
            points.shape[0],
        )
        + points.tobytes()
    )


def decode_frame(data: bytes) -> Frame:
    frame_id, offset = decode_frame_id(data)
    header, offset = _unpack(_FRAME_HEADER, data, offset)
    t_start, t_end, dx, dy, dtheta, sigma_xy, sigma_theta, n = header
    _check(offset + 8 * n == len(data), "frame feature count mismatch")
    features = np.frombuffer(data, dtype="<f4", count=2 * n, offset=offset)
    return Frame(
        id=frame_id,
        t_start=t_start,
        t_end=t_end,
        delta=Pose2(dx, dy, dtheta),
        sigma_xy=sigma_xy,
        sigma_theta=sigma_theta,
        features=features.astype(float).reshape(-1, 2),
    )


def encode_hint(hint: Hint) -> bytes:
    return (
        encode_frame_id(hint.frame_a)
        + encode_frame_id(hint.frame_b)
        + struct.pack(
            "<5d",
            hint.relative.x,
            hint.relative.y,
            hint.relative.theta,
            hint.sigma_xy,
            hint.sigma_theta,
        )
    )


def decode_hint(data: bytes) -> Hint:
    frame_a, offset = decode_frame_id(data)
    frame_b, offset = decode_frame_id(data, offset)
    values, offset = _unpack(struct.Struct("<5d"), data, offset)
    _check(offset == len(data), "trailing bytes after hint")
    x, y, theta, sigma_xy, sigma_theta = values
    return Hint(frame_a, frame_b, Pose2(x, y, theta), sigma_xy, sigma_theta)


# --- Frontiers and costmaps --------------------------------------------------


def encode_frontier(frontier: Frontier) -> bytes:
    vertices = np.asarray(frontier.vertices, dtype="<f4").reshape(-1, 2)
    return (
        _TASK_ID.pack(frontier.id.creator, frontier.id.seq)
        + encode_frame_id(frontier.frame_ref)
        + _FRONTIER_HEADER.pack(int(frontier.kind), vertices.shape[0])
        + vertices.tobytes()
        + struct.pack(
            "<4f",
            frontier.observer.x,
            frontier.observer.y,
            frontier.observer.theta,
            frontier.size,
        )
    )


def decode_frontier(data: bytes) -> Frontier:
    (creator, seq), offset = _unpack(_TASK_ID, data, 0)
    frame_ref, offset = decode_frame_id(data, offset)
    (kind, n), offset = _unpack(_FRONTIER_HEADER, data, offset)
    _check(offset + 8 * n + 16 == len(data), "frontier vertex count mismatch")
    try:
        kind = FrontierKind(kind)
    except ValueError:
        raise CodecError(f"unknown frontier kind {kind}")
    vertices = np.frombuffer(data, dtype="<f4", count=2 * n, offset=offset)
    offset += 8 * n
    (ox, oy, otheta, size), offset = _unpack(struct.Struct("<4f"), data, offset)
    return Frontier(
        id=TaskId(creator, seq),
        frame_ref=frame_ref,
        vertices=vertices.astype(float).reshape(-1, 2),
        kind=kind,
        size=size,
        # theta is stored as float32; keep it as decoded
        observer=Pose2(ox, oy, otheta),
    )


def encode_costmap(bundle: CostmapBundle) -> bytes:
    cells = np.ascontiguousarray(bundle.cells, dtype=np.uint8)
    h, w = cells.shape
    return (
        encode_frame_id(bundle.frame_ref)
        + struct.pack("<HHhh", w, h, bundle.origin[0], bundle.origin[1])
        + cells.tobytes()
    )


def decode_costmap(data: bytes) -> CostmapBundle:
    frame_ref, offset = decode_frame_id(data)
    (w, h, ox, oy), offset = _unpack(struct.Struct("<HHhh"), data, offset)
    _check(offset + w * h == len(data), "costmap size mismatch")
    cells = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=offset).reshape(h, w)
    return CostmapBundle(frame_ref=frame_ref, origin=(ox, oy), cells=cells.copy())


# --- Tasks -------------------------------------------------------------------


def encode_task(task: Task) -> bytes:
    state_byte = (min(task.failures, 15) << 4) | int(task.state)
    return (
        _TASK_ID.pack(task.id.creator, task.id.seq)
        + encode_frame_id(task.frame_ref)
        + _TASK_BODY.pack(
            int(task.kind),
            task.point[0],
            task.point[1],
            task.base_reward,
            task.tier,
            task.version,
            state_byte,
            task.owner,
            task.bid,
            task.blacklist_until,
        )
    )


def decode_task(data: bytes) -> Task:
    (creator, seq), offset = _unpack(_TASK_ID, data, 0)
    frame_ref, offset = decode_frame_id(data, offset)
    body, offset = _unpack(_TASK_BODY, data, offset)
    _check(offset == len(data), "trailing bytes after task row")
    kind, px, py, reward, tier, version, state_byte, owner, bid, until = body
    try:
        kind = TaskKind(kind)
        state = TaskState(state_byte & 0x0F)
    except ValueError:
        raise CodecError(f"invalid task kind/state {kind}/{state_byte}")
    _check(1 <= tier <= 3, f"invalid tier {tier}")
    return Task(
        id=TaskId(creator, seq),
        kind=kind,
        frame_ref=frame_ref,
        point=(px, py),
        base_reward=reward,
        tier=tier,
        version=version,
        state=state,
        owner=owner,
        bid=bid,
        blacklist_until=until,
        failures=state_byte >> 4,
    )


# --- Artefacts and status ----------------------------------------------------


def encode_report(report: Report) -> bytes:
    return (
        _TASK_ID.pack(report.track_id.agent, report.track_id.seq)
        + struct.pack("<B", ARTEFACT_CLASSES.index(report.label))
        + encode_frame_id(report.frame_ref)
        + struct.pack(
            "<2ffHd", report.point[0], report.point[1], report.sigma, report.count, report.time
        )
    )


def decode_report(data: bytes) -> Report:
    (agent, seq), offset = _unpack(_TASK_ID, data, 0)
    (label_index,), offset = _unpack(struct.Struct("<B"), data, offset)
    _check(label_index < len(ARTEFACT_CLASSES), f"unknown artefact class {label_index}")
    frame_ref, offset = decode_frame_id(data, offset)
    (px, py, sigma, count, time), offset = _unpack(struct.Struct("<2ffHd"), data, offset)
    _check(offset == len(data), "trailing bytes after report")
    return Report(
        track_id=TrackId(agent, seq),
        label=ARTEFACT_CLASSES[label_index],
        frame_ref=frame_ref,
        point=(px, py),
        sigma=sigma,
        count=count,
        time=time,
    )


def encode_status(agent: int, frame_ref: FrameId, point: Tuple[float, float], time: float) -> bytes:
    return (
        struct.pack("<H", agent)
        + encode_frame_id(frame_ref)
        + struct.pack("<2fd", point[0], point[1], time)
    )


def decode_status(data: bytes) -> Tuple[int, FrameId, Tuple[float, float], float]:
    (agent,), offset = _unpack(struct.Struct("<H"), data, 0)
    frame_ref, offset = decode_frame_id(data, offset)
    (px, py, time), offset = _unpack(struct.Struct("<2fd"), data, offset)
    _check(offset == len(data), "trailing bytes after status")
    return agent, frame_ref, (px, py), time
