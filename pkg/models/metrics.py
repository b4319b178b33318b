"""
Run metrics: time series samples and the final log
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass(frozen=True)
class AgentSample:
    time: float
    agent: int
    x: float
    y: float
    coverage: float
    active_frontiers: int
    sync_fraction: float
    tasks_total: int
    tasks_owned: int
    reports_sent: int


@dataclass(frozen=True)
class TopicSample:
    """Cumulative bytes carried for one topic up to ``time``."""

    time: float
    topic: str
    bytes: float


@dataclass
class MetricsLog:
    agent_samples: List[AgentSample] = field(default_factory=list)
    topic_samples: List[TopicSample] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    reports: Dict[str, Any] = field(default_factory=dict)

    @property
    def sample_times(self) -> List[float]:
        return sorted({s.time for s in self.agent_samples})
