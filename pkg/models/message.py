"""
Mule message domain types
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, NamedTuple, Optional, Tuple


class QoS(IntEnum):
    VOLATILE = 0
    PERSISTENT = 1


class MessageId(NamedTuple):
    origin: int
    topic: str
    seq: int


@dataclass(frozen=True)
class TopicSpec:
    name: str
    qos: QoS
    priority_class: int = 0


@dataclass(frozen=True)
class StoredMessage:
    id: MessageId
    qos: QoS
    payload: bytes
    created: float

    @property
    def size(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class StreamHoldings:
    """Held seqs of one (origin, topic) stream: 1..watermark plus sparse extras."""

    watermark: int = 0
    extras: Tuple[int, ...] = ()

    def holds(self, seq: int) -> bool:
        return seq <= self.watermark or seq in self.extras

    @property
    def count(self) -> int:
        return self.watermark + len(self.extras)

    def seqs(self):
        yield from range(1, self.watermark + 1)
        yield from self.extras

    @classmethod
    def from_seqs(cls, seqs) -> "StreamHoldings":
        ordered = sorted(set(seqs))
        watermark = 0
        for seq in ordered:
            if seq == watermark + 1:
                watermark = seq
            elif seq > watermark + 1:
                break
        extras = tuple(s for s in ordered if s > watermark)
        return cls(watermark, extras)


@dataclass
class Manifest:
    sender: int
    time: float = 0.0
    streams: Dict[Tuple[int, str], StreamHoldings] = field(default_factory=dict)

    def holds(self, message_id: MessageId) -> bool:
        stream = self.streams.get((message_id.origin, message_id.topic))
        return stream is not None and stream.holds(message_id.seq)

    @property
    def message_count(self) -> int:
        return sum(stream.count for stream in self.streams.values())


@dataclass(frozen=True)
class SyncStatus:
    peer: int
    fraction_synced: Optional[float]
    last_manifest_time: Optional[float]

    @property
    def known(self) -> bool:
        return self.fraction_synced is not None


@dataclass
class MuleConfig:
    manifest_period: float = 2.0
    request_cap: int = 64
    request_timeout: float = 10.0
