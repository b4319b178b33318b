"""
Mesh network domain types
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx

BASE_ID = 0
RELAY_ID_START = 1000
BROADCAST = -1
WILDCARD = "*"

MIB = 1024 * 1024


@dataclass
class CommsModel:
    link_range: float = 25.0
    requires_los: bool = True
    bandwidth: float = 250_000.0
    discovery_period: float = 1.0
    queue_cap: int = 16 * MIB


@dataclass(frozen=True)
class LinkOverride:
    """Forces a link up or down while t_start <= t < t_end; '*' matches any node."""

    t_start: float
    t_end: float
    node_a: object
    node_b: object
    state: bool

    def active(self, time: float) -> bool:
        return self.t_start <= time < self.t_end

    def matches(self, a: int, b: int) -> bool:
        def one(pattern, node):
            return pattern == WILDCARD or pattern == node

        return (one(self.node_a, a) and one(self.node_b, b)) or (
            one(self.node_a, b) and one(self.node_b, a)
        )


class LinkSet:
    """Symmetric adjacency at one instant; reachability is multi-hop."""

    def __init__(self, nodes: Iterable[int], edges: Iterable[Tuple[int, int]]):
        self.graph = nx.Graph()
        self.graph.add_nodes_from(sorted(nodes))
        self.graph.add_edges_from(sorted((min(a, b), max(a, b)) for a, b in edges))
        self._components: Optional[Dict[int, int]] = None
        self._paths: Dict[int, Dict[int, List[int]]] = {}

    @property
    def edges(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset((min(a, b), max(a, b)) for a, b in self.graph.edges)

    def linked(self, a: int, b: int) -> bool:
        return self.graph.has_edge(a, b)

    def neighbors(self, node: int) -> List[int]:
        if node not in self.graph:
            return []
        return sorted(self.graph.neighbors(node))

    def _component_index(self) -> Dict[int, int]:
        if self._components is None:
            self._components = {}
            ordered = sorted(nx.connected_components(self.graph), key=min)
            for index, component in enumerate(ordered):
                for node in component:
                    self._components[node] = index
        return self._components

    def reachable(self, a: int, b: int) -> bool:
        index = self._component_index()
        return a in index and b in index and index[a] == index[b]

    def reachable_from(self, node: int) -> List[int]:
        index = self._component_index()
        if node not in index:
            return []
        return sorted(n for n, c in index.items() if c == index[node] and n != node)

    def path(self, a: int, b: int) -> Optional[List[int]]:
        """Shortest hop path from a to b, deterministic for equal inputs."""
        if not self.reachable(a, b):
            return None
        if a not in self._paths:
            self._paths[a] = nx.single_source_shortest_path(self.graph, a)
        return self._paths[a].get(b)

    def hops(self, a: int, b: int) -> Optional[int]:
        path = self.path(a, b)
        return None if path is None else len(path) - 1

    def next_hop(self, a: int, b: int) -> Optional[int]:
        path = self.path(a, b)
        if path is None or len(path) < 2:
            return None
        return path[1]


@dataclass
class Envelope:
    src: int
    dst: int
    payload: bytes
    enqueue_time: float
    topic: str = ""
    persistent: bool = False
    serial: int = 0
    broadcast_copy: bool = False

    @property
    def size(self) -> int:
        return len(self.payload)

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST


@dataclass
class RelayNode:
    id: int
    position: Tuple[float, float]
    owner: int
    deployed_at: float
    smart: bool = False
