"""
Scenario domain types: the world, team, comms schedule and scripted operator
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from models.frame import NoiseConfig
from models.network import CommsModel, LinkOverride
from models.world import AgentSpec, GridWorld

DEFAULT_DURATION = 3600.0


class EventKind(str, Enum):
    COMMAND = "command"
    PRIORITY_REGION = "priority_region"
    MANUAL_TASK = "manual_task"
    DROP_NODE_TASK = "drop_node_task"
    RECALL = "recall"


@dataclass(frozen=True)
class OperatorEvent:
    time: float
    kind: EventKind
    agent: Optional[int] = None
    payload: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SimulationParams:
    dt: float = 0.1
    sense_period: float = 1.0
    optimize_period: float = 5.0
    costmap_period: float = 10.0
    status_period: float = 2.0
    metrics_period: float = 1.0


@dataclass
class Scenario:
    name: str
    world: GridWorld
    agents: List[AgentSpec]
    comms: CommsModel = field(default_factory=CommsModel)
    links: List[LinkOverride] = field(default_factory=list)
    events: List[OperatorEvent] = field(default_factory=list)
    duration: float = DEFAULT_DURATION
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    params: SimulationParams = field(default_factory=SimulationParams)
    smart_relays: bool = False

    def agent(self, agent_id: int) -> Optional[AgentSpec]:
        return next((a for a in self.agents if a.id == agent_id), None)

    @property
    def carried(self) -> List[int]:
        """Agents that start stowed on a carrier."""
        return sorted(a.carried_uav for a in self.agents if a.carried_uav is not None)
