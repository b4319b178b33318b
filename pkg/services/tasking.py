"""
Market-based task allocation

Every agent holds a replicated task table. Rows merge by a total order, so
tables converge whatever order rows arrive in; agents build bundles of
claimed tasks by single best-position insertion and bid the marginal gain.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from models.frame import FrameId
from models.network import MIB
from models.task import (
    NO_OWNER,
    Bundle,
    PriorityRegion,
    Task,
    TaskId,
    TaskKind,
    TaskState,
)
from services import codecs
from services.codecs import CodecError, as_f32
from utils.mission_logger import log_exception_with_context, mission_logger

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
# One start point to many goals; None where unreachable
TravelTimes = Callable[[Point, List[Point]], List[Optional[float]]]


@dataclass
class TaskingConfig:
    tau: float = 120.0
    bundle_capacity: int = 4
    # Frontier size (m) at or above which a frontier gets tier 3, then tier 2
    tier_thresholds: Tuple[float, float] = (6.0, 2.0)
    max_failures: int = 3
    blacklist_duration: float = 120.0
    sync_bytes: int = MIB
    sync_interval: float = 300.0
    sync_reward: float = 100.0
    drop_node_reward: float = 50.0
    manual_reward: float = 50.0
    bid_period: float = 2.0


def discounted_value(base_reward: float, arrival_time: float, tau: float = 120.0, multiplier: float = 1.0) -> float:
    """
    Reward left after traveling ``arrival_time`` seconds

    Raises:
        ValueError: If arrival_time is negative
    """
    if arrival_time < 0:
        raise ValueError(f"arrival_time cannot be negative (received: {arrival_time})")
    return base_reward * multiplier * math.exp(-arrival_time / tau)


def frontier_tier(size: float, config: Optional[TaskingConfig] = None) -> int:
    high, medium = (config or TaskingConfig()).tier_thresholds
    if size >= high:
        return 3
    if size >= medium:
        return 2
    return 1


def region_effect(
    point: Optional[Point], kind: TaskKind, agent_id: int, regions: Sequence[PriorityRegion]
) -> Tuple[Optional[int], float]:
    """
    Combined effect of the regions covering ``point``

    Multipliers of overlapping regions multiply; the highest tier override wins.
    """
    if point is None:
        return None, 1.0
    tier = None
    multiplier = 1.0
    for region in sorted(regions, key=lambda r: r.id):
        if not (region.contains(point) and region.applies_to(kind, agent_id)):
            continue
        multiplier *= region.reward_multiplier
        if region.priority_override is not None:
            tier = region.priority_override if tier is None else max(tier, region.priority_override)
    return tier, multiplier


def _claim_key(task: Task):
    return (task.version, task.bid, -task.owner)


def compare_claims(claim_a: Task, claim_b: Task) -> Task:
    """
    Winner of two claims on the same task

    A higher version always supersedes; within a version the higher bid
    wins, then the lower agent id.

    Raises:
        ValueError: If the claims reference different tasks
    """
    if claim_a.id != claim_b.id:
        raise ValueError(f"claims reference different tasks: {claim_a.id} and {claim_b.id}")
    return claim_b if _claim_key(claim_b) > _claim_key(claim_a) else claim_a


def merge_rows(row_a: Task, row_b: Task) -> Task:
    """Join of two versions of a row: Complete first, then version, then the claim order."""
    if row_a.id != row_b.id:
        raise ValueError(f"rows reference different tasks: {row_a.id} and {row_b.id}")
    return row_b if row_b.merge_key() > row_a.merge_key() else row_a


def quantize(task: Task) -> Task:
    """Round float fields exactly as the row codec carries them."""
    return task.evolve(
        point=(as_f32(task.point[0]), as_f32(task.point[1])),
        base_reward=as_f32(task.base_reward),
        bid=as_f32(task.bid),
        blacklist_until=as_f32(task.blacklist_until),
        failures=min(task.failures, 15),
    )


class TaskTable:
    """One agent's replica of the task table; local mutations go to ``publish``."""

    def __init__(
        self,
        agent_id: int,
        config: Optional[TaskingConfig] = None,
        publish: Optional[Callable[[Task], None]] = None,
    ):
        self.agent_id = agent_id
        self.config = config or TaskingConfig()
        self.publish = publish
        self.rows: Dict[TaskId, Task] = {}
        self.malformed = 0
        self._seq = 0

    def __len__(self):
        return len(self.rows)

    def __contains__(self, task_id: TaskId) -> bool:
        return task_id in self.rows

    def get(self, task_id: TaskId) -> Optional[Task]:
        return self.rows.get(task_id)

    def next_id(self) -> TaskId:
        self._seq += 1
        return TaskId(self.agent_id, self._seq)

    def _commit(self, row: Task) -> Task:
        row = quantize(row)
        self.rows[row.id] = row
        if self.publish is not None:
            self.publish(row)
        return row

    def create(
        self,
        kind: TaskKind,
        frame_ref: FrameId,
        point: Point,
        base_reward: float,
        tier: int = 1,
        task_id: Optional[TaskId] = None,
    ) -> Task:
        """New Available task created by this agent."""
        task = Task(
            id=task_id or self.next_id(),
            kind=kind,
            frame_ref=frame_ref,
            point=point,
            base_reward=base_reward,
            tier=tier,
        )
        logger.debug(f"Agent {self.agent_id} created {kind.name} task {task.id}")
        return self._commit(task)

    # --- consensus -----------------------------------------------------------

    def merge_row(self, row: Task) -> bool:
        """Merge one received row; True if the local row changed."""
        current = self.rows.get(row.id)
        if row.id.creator == self.agent_id:
            self._seq = max(self._seq, row.id.seq)
        if current is None:
            self.rows[row.id] = row
            return True
        merged = merge_rows(current, row)
        if merged == current:
            return False
        self.rows[row.id] = merged
        return True

    def consensus_merge(self, rows: Iterable[Task]) -> List[Task]:
        """Merge received rows; returns the rows whose local value changed."""
        changed = []
        for row in rows:
            if self.merge_row(row):
                changed.append(self.rows[row.id])
        return changed

    def merge_payload(self, payload: bytes) -> Optional[Task]:
        """Decode and merge a wire row; malformed rows are counted and dropped."""
        try:
            row = codecs.decode_task(payload)
        except CodecError as e:
            self.malformed += 1
            logger.warning(f"Agent {self.agent_id} dropped malformed task row: {e}")
            return None
        return self.rows[row.id] if self.merge_row(row) else None

    # --- local mutations -----------------------------------------------------

    def claim(self, task_id: TaskId, bid: float, time: float = 0.0) -> Task:
        """
        Claim a task at ``bid``

        Claiming an Available (or expired Blacklisted) task opens a new
        version; outbidding an existing claim competes within its version.
        """
        task = self.rows[task_id]
        if task.state == TaskState.CLAIMED:
            row = task.evolve(owner=self.agent_id, bid=bid)
        else:
            row = task.evolve(
                version=task.version + 1,
                state=TaskState.CLAIMED,
                owner=self.agent_id,
                bid=bid,
                blacklist_until=0.0,
                failures=0 if task.state == TaskState.BLACKLISTED else task.failures,
            )
        row = self._commit(row)
        mission_logger.log_task_event(
            "task_claimed", self.agent_id, time, {"task": str(task_id), "bid": row.bid}
        )
        return row

    def release(self, task_id: TaskId, time: float = 0.0) -> Task:
        task = self.rows[task_id]
        row = self._commit(
            task.evolve(version=task.version + 1, state=TaskState.AVAILABLE, owner=NO_OWNER, bid=0.0)
        )
        mission_logger.log_task_event("task_released", self.agent_id, time, {"task": str(task_id)})
        return row

    def complete(self, task_id: TaskId, time: float = 0.0) -> Task:
        task = self.rows[task_id]
        if task.is_complete:
            return task
        row = self._commit(
            task.evolve(version=task.version + 1, state=TaskState.COMPLETE, owner=self.agent_id)
        )
        mission_logger.log_task_event("task_completed", self.agent_id, time, {"task": str(task_id)})
        return row

    def report_failure(self, task_id: TaskId, now: float) -> Task:
        """
        Record a failed attempt and release the task

        At ``max_failures`` the task is blacklisted for ``blacklist_duration``.
        """
        task = self.rows[task_id]
        failures = task.failures + 1
        if failures >= self.config.max_failures:
            row = task.evolve(
                version=task.version + 1,
                state=TaskState.BLACKLISTED,
                owner=NO_OWNER,
                bid=0.0,
                failures=failures,
                blacklist_until=now + self.config.blacklist_duration,
            )
            action = "task_blacklisted"
        else:
            row = task.evolve(
                version=task.version + 1,
                state=TaskState.AVAILABLE,
                owner=NO_OWNER,
                bid=0.0,
                failures=failures,
            )
            action = "task_failed"
        row = self._commit(row)
        mission_logger.log_task_event(
            action, self.agent_id, now, {"task": str(task_id), "failures": failures}
        )
        return row

    # --- queries -------------------------------------------------------------

    def is_open(self, task: Task, now: float) -> bool:
        """Available, or Blacklisted with an expired window."""
        if task.state == TaskState.AVAILABLE:
            return True
        return task.state == TaskState.BLACKLISTED and now >= task.blacklist_until

    def owned_by(self, agent_id: int) -> List[Task]:
        return [t for _, t in sorted(self.rows.items()) if t.is_claimed and t.owner == agent_id]

    def pending(self, kind: Optional[TaskKind] = None) -> List[Task]:
        """Tasks not Complete (optionally of one kind)."""
        return [
            t for _, t in sorted(self.rows.items())
            if not t.is_complete and (kind is None or t.kind == kind)
        ]


@dataclass
class Insertion:
    position: int
    bid: float
    arrivals: List[float] = field(default_factory=list)


class TaskAllocator:
    """Bundle building, bidding and execution order for one agent."""

    def __init__(
        self,
        agent_id: int,
        table: TaskTable,
        config: Optional[TaskingConfig] = None,
        regions: Optional[List[PriorityRegion]] = None,
    ):
        self.agent_id = agent_id
        self.table = table
        self.config = config or table.config
        self.regions: List[PriorityRegion] = regions if regions is not None else []
        self.bundle = Bundle(owner=agent_id)

    # --- valuation -----------------------------------------------------------

    def effective(self, task: Task, point: Optional[Point]) -> Tuple[int, float]:
        """(tier, reward multiplier) after priority regions."""
        tier, multiplier = region_effect(point, task.kind, self.agent_id, self.regions)
        return (task.tier if tier is None else tier), multiplier

    def value(self, task: Task, arrival: float, point: Optional[Point]) -> float:
        _, multiplier = self.effective(task, point)
        return discounted_value(task.base_reward, arrival, self.config.tau, multiplier)

    def _sequence_value(self, tasks, points, legs) -> Tuple[float, List[float]]:
        total = 0.0
        clock = 0.0
        arrivals = []
        for task, point, leg in zip(tasks, points, legs):
            clock += leg
            arrivals.append(clock)
            total += self.value(task, clock, point)
        return total, arrivals

    # --- bundle --------------------------------------------------------------

    def prune(self) -> List[TaskId]:
        """Drop bundle entries this agent no longer owns; returns them."""
        lost = []
        for task_id in list(self.bundle.task_ids):
            row = self.table.get(task_id)
            if row is None or not row.is_claimed or row.owner != self.agent_id:
                lost.append(task_id)
        for task_id in lost:
            self.bundle.task_ids.remove(task_id)
        for row in self.table.owned_by(self.agent_id):
            if row.id not in self.bundle:
                self.bundle.task_ids.append(row.id)
        return lost

    def best_insertion(
        self,
        task: Task,
        point: Point,
        start: Point,
        bundle_points: List[Point],
        from_start: Dict[TaskId, Optional[float]],
        between: Dict[Tuple[int, TaskId], Optional[float]],
    ) -> Optional[Insertion]:
        """
        Best single insertion point for ``task`` without reordering the bundle

        ``from_start`` maps task ids to travel times from the agent,
        ``between`` maps (bundle index, task id) to travel times from that
        bundle entry. Returns None when no position is reachable or the
        marginal gain is not positive.
        """
        bundled = [self.table.rows[t] for t in self.bundle.task_ids]
        old_legs = self._legs(bundled, from_start, between)
        if old_legs is None:
            return None
        old_total, _ = self._sequence_value(bundled, bundle_points, old_legs)
        best: Optional[Insertion] = None
        for position in range(len(bundled) + 1):
            tasks = bundled[:position] + [task] + bundled[position:]
            points = bundle_points[:position] + [point] + bundle_points[position:]
            legs = self._legs(tasks, from_start, between)
            if legs is None:
                continue
            total, arrivals = self._sequence_value(tasks, points, legs)
            gain = total - old_total
            if best is None or gain > best.bid:
                best = Insertion(position, gain, arrivals)
        if best is None or best.bid <= 0.0:
            return None
        return best

    def _legs(self, tasks, from_start, between) -> Optional[List[float]]:
        """Travel time of each leg; bundle indices refer to the current bundle."""
        index = {t: k for k, t in enumerate(self.bundle.task_ids)}
        legs = []
        previous = None
        for task in tasks:
            if previous is None:
                leg = from_start.get(task.id)
            elif previous.id in index:
                leg = between.get((index[previous.id], task.id))
            else:
                # Leaving the new task: travel times are symmetric
                leg = between.get((index[task.id], previous.id)) if task.id in index else None
            if leg is None:
                return None
            legs.append(leg)
            previous = task
        return legs

    def _outbids(self, row: Task, bid: float, now: float) -> bool:
        if self.table.is_open(row, now):
            return True
        if not row.is_claimed or row.owner == self.agent_id:
            return False
        offer = as_f32(bid)
        return offer > row.bid or (offer == row.bid and self.agent_id < row.owner)

    @log_exception_with_context(service="TaskAllocator", operation="bid_round")
    def bid_round(
        self,
        start: Point,
        now: float,
        locate: Callable[[Task], Optional[Point]],
        travel: TravelTimes,
        eligible: Callable[[Task], bool] = lambda task: True,
    ) -> Optional[Task]:
        """
        Claim the single best task this round

        Candidates are ranked by (effective tier, bid), ties by task id.

        Args:
            start: The agent's global position
            now: Simulation time
            locate: Global point of a task (None if its frame is unknown)
            travel: One-to-many travel times
            eligible: Platform/creator filter

        Returns:
            The claimed row, or None
        """
        self.prune()
        if len(self.bundle) >= self.config.bundle_capacity:
            return None
        candidates = []
        for task_id, row in sorted(self.table.rows.items()):
            if row.is_complete or task_id in self.bundle or not eligible(row):
                continue
            if not (self.table.is_open(row, now) or (row.is_claimed and row.owner != self.agent_id)):
                continue
            point = locate(row)
            if point is not None:
                candidates.append((row, point))
        if not candidates:
            return None

        bundle_points = [locate(self.table.rows[t]) for t in self.bundle.task_ids]
        if any(p is None for p in bundle_points):
            return None
        goals = [p for _, p in candidates] + bundle_points
        ids = [row.id for row, _ in candidates] + list(self.bundle.task_ids)
        from_start = dict(zip(ids, travel(start, goals)))
        between: Dict[Tuple[int, TaskId], Optional[float]] = {}
        for k, p in enumerate(bundle_points):
            for task_id, time in zip(ids, travel(p, goals)):
                between[(k, task_id)] = time

        best = None
        for row, point in candidates:
            insertion = self.best_insertion(row, point, start, bundle_points, from_start, between)
            if insertion is None or not self._outbids(row, insertion.bid, now):
                continue
            tier, _ = self.effective(row, point)
            key = (tier, insertion.bid)
            if best is None or key > best[0]:
                best = (key, row, insertion)
        if best is None:
            return None
        _, row, insertion = best
        claimed = self.table.claim(row.id, insertion.bid, now)
        self.bundle.task_ids.insert(insertion.position, row.id)
        self.bundle.arrival_times = insertion.arrivals
        return claimed

    def select_next(self, locate: Optional[Callable[[Task], Optional[Point]]] = None) -> Optional[Task]:
        """
        Owned task to execute now

        Bundle order, except that a higher effective tier always goes first.
        """
        self.prune()
        best = None
        for task_id in self.bundle.task_ids:
            row = self.table.rows[task_id]
            point = locate(row) if locate is not None else None
            tier, _ = self.effective(row, point)
            if best is None or tier > best[0]:
                best = (tier, row)
        return None if best is None else best[1]

    def release_all(self, now: float) -> List[Task]:
        released = [self.table.release(t, now) for t in list(self.bundle.task_ids)]
        self.bundle = Bundle(owner=self.agent_id)
        return released
