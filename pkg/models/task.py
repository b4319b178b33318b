"""
Task allocation domain types
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import List, NamedTuple, Optional, Tuple

from models.frame import FrameId


class TaskId(NamedTuple):
    creator: int
    seq: int

    def __str__(self):
        return f"{self.creator}/{self.seq}"


class TaskKind(IntEnum):
    EXPLORE = 0
    DROP_NODE = 1
    SYNC_DATA = 2
    MANUAL = 3


class TaskState(IntEnum):
    AVAILABLE = 0
    CLAIMED = 1
    COMPLETE = 2
    BLACKLISTED = 3


# Rank used when two rows carry the same version; Complete is handled first
STATE_RANK = {
    TaskState.AVAILABLE: 0,
    TaskState.CLAIMED: 1,
    TaskState.BLACKLISTED: 2,
    TaskState.COMPLETE: 3,
}

NO_OWNER = 0xFFFF


@dataclass(frozen=True)
class Task:
    """One replicated row of the task table."""

    id: TaskId
    kind: TaskKind
    frame_ref: FrameId
    point: Tuple[float, float]
    base_reward: float
    tier: int
    version: int = 0
    state: TaskState = TaskState.AVAILABLE
    owner: int = NO_OWNER
    bid: float = 0.0
    blacklist_until: float = 0.0
    failures: int = 0

    @property
    def is_complete(self) -> bool:
        return self.state == TaskState.COMPLETE

    @property
    def is_claimed(self) -> bool:
        return self.state == TaskState.CLAIMED

    def merge_key(self):
        """Total order used by the row merge (max wins)."""
        return (
            self.is_complete,
            self.version,
            STATE_RANK[self.state],
            self.bid,
            -self.owner,
            self.failures,
            self.blacklist_until,
            int(self.kind),
            self.frame_ref,
            self.point,
            self.base_reward,
            self.tier,
        )

    def evolve(self, **changes) -> "Task":
        return replace(self, **changes)


@dataclass
class Bundle:
    owner: int
    task_ids: List[TaskId] = field(default_factory=list)
    arrival_times: List[float] = field(default_factory=list)
    total_value: float = 0.0

    def __len__(self):
        return len(self.task_ids)

    def __contains__(self, task_id):
        return task_id in self.task_ids


@dataclass(frozen=True)
class PriorityRegion:
    id: int
    box: Tuple[float, float, float, float]
    kinds: Optional[Tuple[TaskKind, ...]] = None
    agents: Optional[Tuple[int, ...]] = None
    priority_override: Optional[int] = None
    reward_multiplier: float = 1.0

    def contains(self, point: Tuple[float, float]) -> bool:
        x0, y0, x1, y1 = self.box
        return x0 <= point[0] <= x1 and y0 <= point[1] <= y1

    def applies_to(self, kind: TaskKind, agent_id: int) -> bool:
        if self.kinds is not None and kind not in self.kinds:
            return False
        if self.agents is not None and agent_id not in self.agents:
            return False
        return True
