"""
Mesh network simulator: time-varying links, per-link bandwidth, hop-by-hop
forwarding and static drop-node relays
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.network import (
    RELAY_ID_START,
    CommsModel,
    Envelope,
    LinkOverride,
    LinkSet,
    RelayNode,
)
from models.world import AgentState, GridWorld
from services.world import line_of_sight
from utils.mission_logger import log_exception_with_context, mission_logger

logger = logging.getLogger(__name__)

LATENCY_BINS = (0.0, 1.0, 2.0, 5.0, 10.0, 30.0, 60.0, 120.0, 300.0, 600.0, np.inf)


class DropNodeUnavailable(Exception):
    """Raised when an agent has no drop node left to deploy"""


def update_links(
    positions: Dict[int, Tuple[float, float]],
    world: GridWorld,
    model: CommsModel,
    overrides: Sequence[LinkOverride] = (),
    time: float = 0.0,
) -> LinkSet:
    """
    Compute the link set for the current node positions

    Args:
        positions: Position of every node (agents, relays, base)
        world: Grid used for line-of-sight checks
        model: Range and line-of-sight settings
        overrides: Scheduled forced link states; later entries win
        time: Current simulation time

    Returns:
        The symmetric link set
    """
    nodes = sorted(positions)
    edges = set()
    for i, a in enumerate(nodes):
        pa = positions[a]
        for b in nodes[i + 1:]:
            pb = positions[b]
            if (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2 > model.link_range ** 2:
                continue
            if model.requires_los and not line_of_sight(world, pa, pb):
                continue
            edges.add((a, b))

    active = [o for o in overrides if o.active(time)]
    if active:
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                for override in active:
                    if override.matches(a, b):
                        if override.state:
                            edges.add((a, b))
                        else:
                            edges.discard((a, b))
    return LinkSet(nodes, edges)


@dataclass
class InFlight:
    envelope: Envelope
    # Bytes of this envelope already carried over the current hop
    progress: float = 0.0

    @property
    def remaining(self) -> float:
        return self.envelope.size - self.progress


class LinkQueues:
    """Directed FIFO queues per link plus envelopes parked at a node without a route."""

    def __init__(self):
        self.links: Dict[Tuple[int, int], Deque[InFlight]] = {}
        self.parked: Dict[int, List[Envelope]] = {}
        self._held: Dict[int, float] = {}

    def push(self, src: int, hop: int, envelope: Envelope):
        self.links.setdefault((src, hop), deque()).append(InFlight(envelope))
        self._held[src] = self._held.get(src, 0.0) + envelope.size

    def park(self, node: int, envelope: Envelope):
        self.parked.setdefault(node, []).append(envelope)
        self._held[node] = self._held.get(node, 0.0) + envelope.size

    def release(self, node: int, envelope: Envelope):
        self._held[node] = self._held.get(node, 0.0) - envelope.size

    def held_bytes(self, node: int) -> float:
        return self._held.get(node, 0.0)

    def pending_bytes(self, a: int, b: int) -> float:
        return float(sum(item.remaining for item in self.links.get((a, b), ())))

    def take_parked(self, node: int) -> List[Envelope]:
        parked = self.parked.pop(node, [])
        for envelope in parked:
            self.release(node, envelope)
        return parked

    def held_by(self, node: int) -> List[Tuple[Optional[Tuple[int, int]], Envelope]]:
        """Everything waiting at a node, oldest first."""
        items = [(None, e) for e in self.parked.get(node, [])]
        for key, queue in self.links.items():
            if key[0] == node:
                items.extend((key, item.envelope) for item in queue)
        items.sort(key=lambda item: (item[1].enqueue_time, item[1].serial))
        return items

    def discard(self, node: int, key: Optional[Tuple[int, int]], envelope: Envelope):
        if key is None:
            self.parked[node].remove(envelope)
        else:
            queue = self.links[key]
            for item in queue:
                if item.envelope is envelope:
                    queue.remove(item)
                    break
        self.release(node, envelope)

    def is_empty(self) -> bool:
        return not any(self.links.values()) and not any(self.parked.values())


@dataclass
class DeliveryReport:
    # (node the envelope arrived at, envelope)
    arrivals: List[Tuple[int, Envelope]] = field(default_factory=list)
    link_bytes: Dict[Tuple[int, int], float] = field(default_factory=dict)
    topic_bytes: Dict[str, float] = field(default_factory=dict)
    dropped: int = 0


def deliver(queues: LinkQueues, links: LinkSet, dt: float, bandwidth: float) -> DeliveryReport:
    """
    Advance every link queue by one tick

    At most bandwidth * dt bytes leave each directed link, FIFO. Queues on
    links that no longer exist are emptied: broadcast copies are dropped,
    unicast envelopes are parked at the link's source with progress reset.
    """
    report = DeliveryReport()
    budget_per_link = bandwidth * dt
    for key in sorted(queues.links):
        queue = queues.links[key]
        if not queue:
            continue
        src, hop = key
        if not links.linked(src, hop):
            while queue:
                item = queue.popleft()
                queues.release(src, item.envelope)
                if item.envelope.broadcast_copy:
                    report.dropped += 1
                else:
                    queues.park(src, item.envelope)
            continue

        budget = budget_per_link
        carried = 0.0
        while queue and budget > 0.0 or (queue and queue[0].remaining <= 0.0):
            item = queue[0]
            topic = item.envelope.topic
            if item.remaining <= budget:
                step = item.remaining
                queue.popleft()
                queues.release(src, item.envelope)
                report.arrivals.append((hop, item.envelope))
            else:
                step = budget
                item.progress += budget
            budget -= step
            carried += step
            report.topic_bytes[topic] = report.topic_bytes.get(topic, 0.0) + step
        if carried:
            report.link_bytes[key] = carried
    return report


@dataclass
class NetworkStats:
    topic_bytes: Dict[str, float] = field(default_factory=dict)
    delivered: int = 0
    dropped_broadcast: int = 0
    dropped_overflow: int = 0
    latencies: List[float] = field(default_factory=list)

    def latency_histogram(self) -> List[int]:
        counts, _ = np.histogram(np.asarray(self.latencies, dtype=float), bins=LATENCY_BINS)
        return [int(c) for c in counts]


class NetworkSimulator:
    """Owns node positions, link state and every queued envelope of a run."""

    def __init__(
        self,
        world: GridWorld,
        model: Optional[CommsModel] = None,
        overrides: Iterable[LinkOverride] = (),
        smart_relays: bool = False,
    ):
        self.world = world
        self.model = model or CommsModel()
        self.overrides = list(overrides)
        self.smart_relays = smart_relays
        self.positions: Dict[int, Tuple[float, float]] = {}
        self.endpoints: set = set()
        self.relays: Dict[int, RelayNode] = {}
        self.queues = LinkQueues()
        self.inboxes: Dict[int, List[Envelope]] = {}
        self.links = LinkSet([], [])
        self.stats = NetworkStats()
        self.time = 0.0
        self._next_discovery = 0.0
        self._serial = 0
        self._next_relay_id = RELAY_ID_START

    # --- membership ----------------------------------------------------------

    def add_node(self, node_id: int, position: Tuple[float, float], endpoint: bool = True):
        self.positions[node_id] = (float(position[0]), float(position[1]))
        if endpoint:
            self.endpoints.add(node_id)
            self.inboxes.setdefault(node_id, [])
        # New nodes join the link set at the next discovery round
        self._next_discovery = min(self._next_discovery, self.time)
        logger.debug(f"Node {node_id} joined at {self.positions[node_id]}")

    def set_position(self, node_id: int, position: Tuple[float, float]):
        self.positions[node_id] = (float(position[0]), float(position[1]))

    @log_exception_with_context(service="NetworkSimulator", operation="drop_node")
    def drop_node(self, agent_state: AgentState, time: Optional[float] = None) -> RelayNode:
        """
        Deploy a static relay at the agent's pose

        Raises:
            DropNodeUnavailable: If the agent carries no more drop nodes
        """
        if agent_state.drop_nodes_left <= 0:
            raise DropNodeUnavailable(f"Agent {agent_state.spec.id} has no drop node left")
        time = self.time if time is None else time
        relay = RelayNode(
            id=self._next_relay_id,
            position=agent_state.pose.position,
            owner=agent_state.spec.id,
            deployed_at=time,
            smart=self.smart_relays,
        )
        self._next_relay_id += 1
        agent_state.drop_nodes_left -= 1
        self.relays[relay.id] = relay
        self.add_node(relay.id, relay.position, endpoint=relay.smart)
        logger.info(f"Agent {relay.owner} deployed relay {relay.id} at {relay.position}")
        mission_logger.log_drop_node(relay.owner, time, relay.id, relay.position)
        return relay

    # --- traffic -------------------------------------------------------------

    def send(self, envelope: Envelope) -> int:
        """
        Queue an envelope at its source; returns the number of copies queued

        Broadcast envelopes become one copy per endpoint currently reachable
        from the source. Nothing is queued for an unreachable broadcast.
        """
        envelope.enqueue_time = self.time
        if envelope.is_broadcast:
            copies = 0
            for target in self.links.reachable_from(envelope.src):
                if target not in self.endpoints:
                    continue
                copy = Envelope(
                    src=envelope.src,
                    dst=target,
                    payload=envelope.payload,
                    enqueue_time=self.time,
                    topic=envelope.topic,
                    persistent=envelope.persistent,
                    serial=self._next_serial(),
                    broadcast_copy=True,
                )
                self._route(envelope.src, copy)
                copies += 1
            return copies
        envelope.serial = self._next_serial()
        self._route(envelope.src, envelope)
        return 1

    def receive(self, node_id: int) -> List[Envelope]:
        inbox = self.inboxes.get(node_id, [])
        self.inboxes[node_id] = []
        return inbox

    def step(self, time: float, dt: float) -> DeliveryReport:
        """Refresh links when due, then move one tick worth of bytes."""
        self.time = time
        if time + 1e-9 >= self._next_discovery:
            self.refresh_links(time)
            self._next_discovery = time + self.model.discovery_period

        report = deliver(self.queues, self.links, dt, self.model.bandwidth)
        self.stats.dropped_broadcast += report.dropped
        for topic, count in report.topic_bytes.items():
            self.stats.topic_bytes[topic] = self.stats.topic_bytes.get(topic, 0.0) + count
        # Forwarded envelopes continue on the next tick
        for node, envelope in report.arrivals:
            self._route(node, envelope)
        return report

    def refresh_links(self, time: float):
        previous = self.links.edges
        self.links = update_links(self.positions, self.world, self.model, self.overrides, time)
        if self.links.edges != previous:
            logger.debug(f"t={time:.1f} links changed: {sorted(self.links.edges)}")
            for node in sorted(self.queues.parked):
                for envelope in self.queues.take_parked(node):
                    self._route(node, envelope)

    def reachable(self, a: int, b: int) -> bool:
        return self.links.reachable(a, b)

    def neighbors_of(self, node_id: int) -> List[int]:
        """Endpoints currently reachable from ``node_id``."""
        return [n for n in self.links.reachable_from(node_id) if n in self.endpoints]

    # --- internals -----------------------------------------------------------

    def _next_serial(self) -> int:
        self._serial += 1
        return self._serial

    def _route(self, node: int, envelope: Envelope):
        if node == envelope.dst:
            self.inboxes.setdefault(node, []).append(envelope)
            self.stats.delivered += 1
            self.stats.latencies.append(self.time - envelope.enqueue_time)
            return
        hop = self.links.next_hop(node, envelope.dst)
        if hop is None:
            if envelope.broadcast_copy:
                self.stats.dropped_broadcast += 1
            else:
                self._admit(node, envelope, None)
            return
        self._admit(node, envelope, hop)

    def _admit(self, node: int, envelope: Envelope, hop: Optional[int]):
        """Queue at ``node`` while keeping it under the per-node cap."""
        cap = self.model.queue_cap
        if self.queues.held_bytes(node) + envelope.size > cap:
            for key, queued in self.queues.held_by(node):
                if self.queues.held_bytes(node) + envelope.size <= cap:
                    break
                if not queued.persistent:
                    self.queues.discard(node, key, queued)
                    self.stats.dropped_overflow += 1
            if self.queues.held_bytes(node) + envelope.size > cap and not envelope.persistent:
                self.stats.dropped_overflow += 1
                logger.warning(f"Queue at node {node} full; dropped volatile {envelope.topic}")
                return
        if hop is None:
            self.queues.park(node, envelope)
        else:
            self.queues.push(node, hop, envelope)

