"""
Mule: disruption-tolerant peer-to-peer topic bridging

Persistent topics are pulled: every node periodically broadcasts a manifest
of its holdings and peers request what they miss. Volatile topics are pushed
best-effort and never stored.
"""

import logging
from collections import defaultdict
from typing import Callable, Dict, Iterable, List, Optional

from models.message import (
    Manifest,
    MessageId,
    MuleConfig,
    QoS,
    StoredMessage,
    StreamHoldings,
    SyncStatus,
    TopicSpec,
)
from models.network import BASE_ID, BROADCAST, Envelope
from services import codecs
from services.codecs import CodecError
from services.message_store import InMemoryMessageStore
from services.netsim import NetworkSimulator
from utils.sentry_config import capture_exceptions

logger = logging.getLogger(__name__)

MANIFEST_TOPIC = "mule.manifest"
REQUEST_TOPIC = "mule.request"

DEFAULT_TOPICS = (
    TopicSpec("artefacts", QoS.PERSISTENT, 0),
    TopicSpec("hints", QoS.PERSISTENT, 1),
    TopicSpec("tasks", QoS.PERSISTENT, 1),
    TopicSpec("frames", QoS.PERSISTENT, 2),
    TopicSpec("frontiers", QoS.PERSISTENT, 3),
    TopicSpec("costmaps", QoS.PERSISTENT, 4),
    TopicSpec("status", QoS.VOLATILE, 5),
)

Subscriber = Callable[[StoredMessage], None]


class UnknownTopicError(Exception):
    """Raised when publishing or subscribing to an unregistered topic"""


class TopicCollisionError(Exception):
    """Raised when two topic names share a 16-bit wire hash"""


def fnv1a_16(name: str) -> int:
    """32-bit FNV-1a of the UTF-8 name, xor-folded to 16 bits."""
    value = 0x811C9DC5
    for byte in name.encode("utf-8"):
        value ^= byte
        value = (value * 0x01000193) & 0xFFFFFFFF
    return (value >> 16) ^ (value & 0xFFFF)


class TopicRegistry:
    def __init__(self, topics: Iterable[TopicSpec] = DEFAULT_TOPICS):
        self._specs: Dict[str, TopicSpec] = {}
        self._by_hash: Dict[int, str] = {}
        for spec in topics:
            self.register(spec)

    def register(self, spec: TopicSpec):
        """
        Add a topic

        Raises:
            TopicCollisionError: If another topic already owns the name's hash
        """
        digest = fnv1a_16(spec.name)
        owner = self._by_hash.get(digest)
        if owner is not None and owner != spec.name:
            raise TopicCollisionError(
                f"Topic '{spec.name}' collides with '{owner}' (hash {digest:#06x})"
            )
        self._specs[spec.name] = spec
        self._by_hash[digest] = spec.name

    def get(self, name: str) -> TopicSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownTopicError(f"Topic '{name}' is not configured")

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def hash_of(self, name: str) -> int:
        self.get(name)
        return fnv1a_16(name)

    def name_of(self, digest: int) -> str:
        try:
            return self._by_hash[digest]
        except KeyError:
            raise CodecError(f"Unknown topic hash {digest:#06x}")

    def priority(self, name: str) -> int:
        return self.get(name).priority_class


class Mule:
    """
    One Mule peer; owned by a single agent (or the base, or a smart relay)

    All traffic goes through the network simulator; instances never touch
    each other directly.
    """

    def __init__(
        self,
        agent_id: int,
        network: NetworkSimulator,
        registry: Optional[TopicRegistry] = None,
        store: Optional[InMemoryMessageStore] = None,
        config: Optional[MuleConfig] = None,
    ):
        self.agent_id = agent_id
        self.network = network
        self.registry = registry or TopicRegistry()
        self.store = store if store is not None else InMemoryMessageStore()
        self.config = config or MuleConfig()
        self.peer_manifests: Dict[int, Manifest] = {}
        self.time = 0.0
        self.redundant_requests = 0
        self.duplicate_arrivals = 0
        self.malformed = 0
        self._seq: Dict[str, int] = defaultdict(int)
        self._subscribers: Dict[str, List[Subscriber]] = defaultdict(list)
        self._in_flight: Dict[MessageId, float] = {}
        self._next_manifest = 0.0
        for message in self.store:
            if message.id.origin == agent_id:
                self._seq[message.id.topic] = max(self._seq[message.id.topic], message.id.seq)

    # --- local API -----------------------------------------------------------

    def subscribe(self, topic: str, callback: Subscriber):
        """Call ``callback`` once per message newly received on ``topic``."""
        self.registry.get(topic)
        self._subscribers[topic].append(callback)

    @capture_exceptions
    def publish(self, topic: str, payload: bytes, time: Optional[float] = None) -> MessageId:
        """
        Publish a payload on a configured topic

        Args:
            topic: Registered topic name
            payload: Opaque bytes
            time: Creation time (defaults to the last step time)

        Returns:
            The id given to the message

        Raises:
            UnknownTopicError: If the topic is not configured
        """
        spec = self.registry.get(topic)
        created = self.time if time is None else time
        self._seq[topic] += 1
        message = StoredMessage(
            id=MessageId(self.agent_id, topic, self._seq[topic]),
            qos=spec.qos,
            payload=bytes(payload),
            created=created,
        )
        if spec.qos == QoS.PERSISTENT:
            self.store.add(message)
        else:
            self.network.send(
                Envelope(
                    src=self.agent_id,
                    dst=BROADCAST,
                    payload=codecs.encode_data(message, self.registry.hash_of),
                    enqueue_time=created,
                    topic=topic,
                )
            )
        return message.id

    def assemble_manifest(self, time: Optional[float] = None) -> Manifest:
        return Manifest(
            sender=self.agent_id,
            time=self.time if time is None else time,
            streams={key: self.store.holdings(key) for key in self.store.streams()},
        )

    def diff_and_request(self, local: Manifest, peer: Manifest) -> List[MessageId]:
        """
        Ids the peer advertises that ``local`` lacks, highest priority first

        Ordered by (topic priority class, seq, origin, topic) and capped at
        ``request_cap``. Ids already requested from anyone within
        ``request_timeout`` are left out.
        """
        cap = self.config.request_cap
        candidates = []
        for (origin, topic), advertised in sorted(peer.streams.items()):
            if topic not in self.registry:
                continue
            held = local.streams.get((origin, topic), StreamHoldings())
            priority = self.registry.priority(topic)
            taken = 0
            for seq in self._advertised_above(advertised, held.watermark):
                if held.holds(seq):
                    continue
                message_id = MessageId(origin, topic, seq)
                if self._requested_recently(message_id):
                    continue
                candidates.append((priority, seq, origin, topic))
                taken += 1
                if taken >= cap:
                    break
        candidates.sort()
        return [MessageId(origin, topic, seq) for _, seq, origin, topic in candidates[:cap]]

    def serve_request(self, ids: Iterable[MessageId]) -> List[StoredMessage]:
        """Held messages among ``ids``; the rest are skipped."""
        served = []
        for message_id in ids:
            message = self.store.get(message_id)
            if message is not None:
                served.append(message)
        return served

    def sync_status(self, peer: int) -> SyncStatus:
        """Share of the peer's advertised messages held here (None until a manifest arrives)."""
        manifest = self.peer_manifests.get(peer)
        if manifest is None:
            return SyncStatus(peer=peer, fraction_synced=None, last_manifest_time=None)
        advertised = manifest.message_count
        if advertised == 0:
            return SyncStatus(peer, 1.0, manifest.time)
        held = sum(
            self._overlap(stream, self.store.holdings(key))
            for key, stream in manifest.streams.items()
        )
        return SyncStatus(peer, held / advertised, manifest.time)

    def sync_statuses(self) -> Dict[int, SyncStatus]:
        return {peer: self.sync_status(peer) for peer in sorted(self.peer_manifests)}

    def unsynced_to_base_bytes(self) -> int:
        """Bytes of local persistent messages the base has not confirmed holding."""
        if self.agent_id == BASE_ID:
            return 0
        base = self.peer_manifests.get(BASE_ID)
        if base is None:
            return self.store.total_bytes
        return sum(m.size for m in self.store if not base.holds(m.id))

    def holds_all_created_before(self, peer: int, cutoff: float) -> bool:
        """True when ``peer`` advertised every local message created before ``cutoff``."""
        manifest = self.peer_manifests.get(peer)
        pending = [m for m in self.store if m.created < cutoff]
        if not pending:
            return True
        if manifest is None:
            return False
        return all(manifest.holds(m.id) for m in pending)

    # --- protocol ------------------------------------------------------------

    def step(self, time: float):
        """Consume arrived envelopes, then broadcast a manifest when due."""
        self.time = time
        for envelope in self.network.receive(self.agent_id):
            self.handle(envelope)
        expired = [mid for mid, t in self._in_flight.items() if time - t >= self.config.request_timeout]
        for message_id in expired:
            del self._in_flight[message_id]
        if time + 1e-9 >= self._next_manifest:
            if self.network.neighbors_of(self.agent_id):
                self._broadcast_manifest(time)
            self._next_manifest = time + self.config.manifest_period

    def handle(self, envelope: Envelope):
        """Apply one received envelope; malformed payloads are counted and dropped."""
        try:
            kind = codecs.message_type(envelope.payload)
            if kind == codecs.MSG_MANIFEST:
                self._on_manifest(envelope)
            elif kind == codecs.MSG_REQUEST:
                self._on_request(envelope)
            elif kind == codecs.MSG_DATA:
                self._on_data(envelope)
            else:
                raise CodecError(f"unknown message type {kind}")
        except CodecError as e:
            self.malformed += 1
            logger.warning(f"Agent {self.agent_id} dropped payload from {envelope.src}: {e}")

    def _broadcast_manifest(self, time: float):
        manifest = self.assemble_manifest(time)
        self.network.send(
            Envelope(
                src=self.agent_id,
                dst=BROADCAST,
                payload=codecs.encode_manifest(manifest, self.registry.hash_of),
                enqueue_time=time,
                topic=MANIFEST_TOPIC,
            )
        )

    def _on_manifest(self, envelope: Envelope):
        manifest = codecs.decode_manifest(
            envelope.payload, envelope.src, envelope.enqueue_time, self.registry.name_of
        )
        previous = self.peer_manifests.get(envelope.src)
        if previous is not None and manifest.time <= previous.time:
            return
        self.peer_manifests[envelope.src] = manifest
        ids = self.diff_and_request(self.assemble_manifest(), manifest)
        if not ids:
            return
        for message_id in ids:
            if message_id in self.store:
                self.redundant_requests += 1
                logger.error(f"Agent {self.agent_id} requested held message {message_id}")
            self._in_flight[message_id] = self.time
        logger.debug(f"Agent {self.agent_id} requests {len(ids)} messages from {envelope.src}")
        self.network.send(
            Envelope(
                src=self.agent_id,
                dst=envelope.src,
                payload=codecs.encode_request(ids, self.registry.hash_of),
                enqueue_time=self.time,
                topic=REQUEST_TOPIC,
            )
        )

    def _on_request(self, envelope: Envelope):
        ids = codecs.decode_request(envelope.payload, self.registry.name_of)
        for message in self.serve_request(ids):
            self.network.send(
                Envelope(
                    src=self.agent_id,
                    dst=envelope.src,
                    payload=codecs.encode_data(message, self.registry.hash_of),
                    enqueue_time=self.time,
                    topic=message.id.topic,
                    persistent=True,
                )
            )

    def _on_data(self, envelope: Envelope):
        message = codecs.decode_data(envelope.payload, envelope.enqueue_time, self.registry.name_of)
        spec = self.registry.get(message.id.topic)
        if spec.qos == QoS.PERSISTENT:
            self._in_flight.pop(message.id, None)
            if message.id in self.store:
                self.duplicate_arrivals += 1
                return
            self.store.add(message)
        for callback in self._subscribers.get(message.id.topic, ()):
            callback(message)

    # --- helpers -------------------------------------------------------------

    def _requested_recently(self, message_id: MessageId) -> bool:
        sent = self._in_flight.get(message_id)
        return sent is not None and self.time - sent < self.config.request_timeout

    @staticmethod
    def _advertised_above(stream: StreamHoldings, floor: int):
        yield from range(floor + 1, stream.watermark + 1)
        yield from (s for s in stream.extras if s > floor and s > stream.watermark)

    @staticmethod
    def _overlap(theirs: StreamHoldings, mine: StreamHoldings) -> int:
        common = min(theirs.watermark, mine.watermark)
        count = common
        count += sum(1 for s in mine.extras if common < s <= theirs.watermark)
        if mine.watermark > theirs.watermark:
            count += sum(1 for s in theirs.extras if s <= mine.watermark)
        count += sum(1 for s in theirs.extras if s > mine.watermark and s in mine.extras)
        return count
