"""
Agent executive: command lists parsed into nested finite state automata

A command list is a linear sequence of parameterised behaviours. The
sequence advances only on a tick (1 Hz); behaviours may still steer the
agent between ticks through ``update``.

Behaviours talk to their agent through a context object. The agent runtime
is the context in a simulation; it provides:

    agent_id, kind, navigator, allocator, table
    believed_position() -> global point
    report_navigation_failure(target, reason)
    locate_task(task) -> global point or None
    begin_task(task) / complete_task(task_id) / fail_task(task_id)
    start_mrta(sync_policy) / stop_mrta()
    exploration_finished() -> bool
    task_satisfied(task) -> bool
    synced_since(time) -> bool
    base_reachable() -> bool
    sync_target() -> global point or None
    drop_node() -> global point of the deployed node
    retreat_point(node, distance) -> global point to back away to
    launch_uav() -> launched agent id or None
"""

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from models.task import Task, TaskKind
from models.world import VelocityCommand
from services.navigation import NavStatus
from services.netsim import DropNodeUnavailable
from utils.capabilities import CapabilityError
from utils.mission_logger import log_exception_with_context

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

TICK_PERIOD = 1.0
RETREAT_DISTANCE = 1.5
MIN_NODE_CLEARANCE = 1.0


class Status(Enum):
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class CommandListParseError(Exception):
    """Raised when a command list cannot be turned into an FSA"""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class Behaviour:
    """One FSA state. ``enter``/``exit`` only ever run on a tick."""

    name = "behaviour"

    def enter(self, ctx, time: float):
        pass

    def tick(self, ctx, time: float) -> Status:
        return Status.SUCCEEDED

    def update(self, ctx, time: float) -> VelocityCommand:
        return VelocityCommand()

    def exit(self, ctx, time: float):
        pass


class SequenceFsa(Behaviour):
    """
    Linear FSA over child behaviours

    A child is entered on a tick and ticked right away; when it succeeds
    it is exited and the next child waits for the following tick. A failed
    child fails the whole sequence. An empty sequence has already succeeded.
    """

    def __init__(self, children: Sequence[Behaviour], name: str = "sequence"):
        self.name = name
        self.children = list(children)
        self.index = 0
        self.status = Status.RUNNING if self.children else Status.SUCCEEDED
        self.entered = False
        self.entries = 0
        self.exits = 0
        self.transitions = 0

    @property
    def current(self) -> Optional[Behaviour]:
        if self.status != Status.RUNNING or not self.entered:
            return None
        return self.children[self.index]

    def enter(self, ctx, time: float):
        self.index = 0
        self.entered = False
        self.status = Status.RUNNING if self.children else Status.SUCCEEDED

    def tick(self, ctx, time: float) -> Status:
        if self.status != Status.RUNNING:
            return self.status
        child = self.children[self.index]
        if not self.entered:
            child.enter(ctx, time)
            self.entered = True
            self.entries += 1
            self.transitions += 1
        result = child.tick(ctx, time)
        if result == Status.RUNNING:
            return self.status
        child.exit(ctx, time)
        self.exits += 1
        self.entered = False
        if result == Status.FAILED:
            self.status = Status.FAILED
            logger.info(f"Agent {ctx.agent_id} {self.name}: '{child.name}' failed at t={time:.0f}")
            return self.status
        self.index += 1
        if self.index >= len(self.children):
            self.status = Status.SUCCEEDED
        return self.status

    def update(self, ctx, time: float) -> VelocityCommand:
        child = self.current
        if child is None:
            return VelocityCommand()
        return child.update(ctx, time)

    def exit(self, ctx, time: float):
        child = self.current
        if child is not None:
            child.exit(ctx, time)
            self.exits += 1
            self.entered = False


class GotoBehaviour(Behaviour):
    """Travel to a global point; no goal means the position held on entry."""

    name = "goto"

    def __init__(self, goal: Optional[Point] = None, tolerance: float = 0.5):
        self.goal = goal
        self.tolerance = tolerance
        self._target: Optional[Point] = None

    def enter(self, ctx, time: float):
        self._target = self.goal if self.goal is not None else ctx.believed_position()
        ctx.navigator.set_goal(self._target, self.tolerance)

    def tick(self, ctx, time: float) -> Status:
        navigator = ctx.navigator
        if navigator.distance_to_goal() <= self.tolerance or navigator.status == NavStatus.ARRIVED:
            return Status.SUCCEEDED
        if navigator.status == NavStatus.FAILED:
            ctx.report_navigation_failure(self._target, navigator.reason)
            return Status.FAILED
        return Status.RUNNING

    def update(self, ctx, time: float) -> VelocityCommand:
        return ctx.navigator.update(time)

    def exit(self, ctx, time: float):
        ctx.navigator.clear()


class WaitBehaviour(Behaviour):
    name = "wait"

    def __init__(self, seconds: float):
        self.seconds = seconds
        self._until = 0.0

    def enter(self, ctx, time: float):
        self._until = time + self.seconds

    def tick(self, ctx, time: float) -> Status:
        return Status.SUCCEEDED if time + 1e-9 >= self._until else Status.RUNNING


class SyncBehaviour(Behaviour):
    """
    Head for base communications until the base holds this agent's data

    Moves toward the base, or the nearest relay the base can be reached
    through, and stops as soon as the base is reachable over the network.
    Succeeds once the base holds every message created before entry.
    """

    name = "sync"

    def __init__(self, tolerance: float = 1.0):
        self.tolerance = tolerance
        self._entered_at = 0.0
        self._goal: Optional[Point] = None

    def enter(self, ctx, time: float):
        self._entered_at = time
        self._goal = None

    def tick(self, ctx, time: float) -> Status:
        if ctx.synced_since(self._entered_at):
            return Status.SUCCEEDED
        if ctx.base_reachable():
            if self._goal is not None:
                ctx.navigator.clear()
                self._goal = None
            return Status.RUNNING
        target = ctx.sync_target()
        if target is None:
            return Status.RUNNING
        if self._goal != target or ctx.navigator.status == NavStatus.FAILED:
            # A failed attempt is retried; sync never gives up by itself
            self._goal = target
            ctx.navigator.set_goal(target, self.tolerance)
        return Status.RUNNING

    def update(self, ctx, time: float) -> VelocityCommand:
        if self._goal is None:
            return VelocityCommand()
        return ctx.navigator.update(time)

    def exit(self, ctx, time: float):
        if self._goal is not None:
            ctx.navigator.clear()
        self._goal = None


class DeployNodeBehaviour(Behaviour):
    name = "deploy-node"

    def __init__(self, on_deploy: Callable[[Point], None]):
        self.on_deploy = on_deploy

    def tick(self, ctx, time: float) -> Status:
        try:
            position = ctx.drop_node()
        except (DropNodeUnavailable, CapabilityError) as e:
            logger.warning(f"Agent {ctx.agent_id} could not deploy a node: {e}")
            return Status.FAILED
        self.on_deploy(position)
        return Status.SUCCEEDED


class RetreatBehaviour(GotoBehaviour):
    """Back away from a deployed node."""

    name = "retreat"

    def __init__(self, distance: float = RETREAT_DISTANCE, clearance: float = MIN_NODE_CLEARANCE):
        super().__init__(goal=None, tolerance=0.25)
        self.distance = distance
        self.clearance = clearance
        self.node: Optional[Point] = None

    def enter(self, ctx, time: float):
        self.goal = ctx.retreat_point(self.node, self.distance)
        super().enter(ctx, time)

    def tick(self, ctx, time: float) -> Status:
        x, y = ctx.believed_position()
        clear = math.hypot(x - self.node[0], y - self.node[1]) >= self.clearance
        status = super().tick(ctx, time)
        if status == Status.SUCCEEDED and not clear:
            return Status.RUNNING
        return status


def drop_comms_node(target: Optional[Point] = None) -> SequenceFsa:
    """Nested FSA: go to the drop point, deploy, then move away from the node."""
    retreat = RetreatBehaviour()

    def remember(position: Point):
        retreat.node = position

    return SequenceFsa(
        [GotoBehaviour(target), DeployNodeBehaviour(remember), retreat],
        name="drop-comms-node",
    )


class LaunchUavBehaviour(Behaviour):
    name = "launch-uav"

    def tick(self, ctx, time: float) -> Status:
        return Status.FAILED if ctx.launch_uav() is None else Status.SUCCEEDED


def task_behaviour(task: Task, ctx) -> Optional[Behaviour]:
    """Behaviour that carries out one allocated task."""
    point = ctx.locate_task(task)
    if task.kind == TaskKind.SYNC_DATA:
        return SyncBehaviour()
    if point is None:
        return None
    if task.kind == TaskKind.DROP_NODE:
        return drop_comms_node(point)
    return GotoBehaviour(point)


class ExploreBehaviour(Behaviour):
    """
    Execute whatever the task allocator selects

    Each tick the selection is re-read: a higher-tier task preempts the
    current one. Explore tasks also finish when their frontier is culled.
    Succeeds when no open Explore task is left.
    """

    name = "explore"

    def __init__(self, sync_policy: bool = False):
        self.sync_policy = sync_policy
        self.task: Optional[Task] = None
        self.child: Optional[Behaviour] = None

    def enter(self, ctx, time: float):
        ctx.start_mrta(self.sync_policy)

    def _drop_child(self, ctx, time: float):
        if self.child is not None:
            self.child.exit(ctx, time)
        self.child = None
        self.task = None

    def tick(self, ctx, time: float) -> Status:
        selected = ctx.allocator.select_next(ctx.locate_task)
        if self.task is not None and (selected is None or selected.id != self.task.id):
            self._drop_child(ctx, time)
        if selected is None:
            return Status.SUCCEEDED if ctx.exploration_finished() else Status.RUNNING

        if self.task is None:
            child = task_behaviour(selected, ctx)
            if child is None:
                return Status.RUNNING
            self.task, self.child = selected, child
            ctx.begin_task(selected)
            child.enter(ctx, time)

        if selected.kind == TaskKind.EXPLORE and ctx.task_satisfied(selected):
            task_id = self.task.id
            self._drop_child(ctx, time)
            ctx.complete_task(task_id)
            return Status.RUNNING

        result = self.child.tick(ctx, time)
        if result == Status.RUNNING:
            return Status.RUNNING
        task_id = self.task.id
        self._drop_child(ctx, time)
        if result == Status.SUCCEEDED:
            ctx.complete_task(task_id)
        else:
            ctx.fail_task(task_id)
        return Status.RUNNING

    def update(self, ctx, time: float) -> VelocityCommand:
        if self.child is None:
            return VelocityCommand()
        return self.child.update(ctx, time)

    def exit(self, ctx, time: float):
        self._drop_child(ctx, time)
        ctx.stop_mrta()


@dataclass
class BehaviourSpec:
    factory: Callable[[List[float]], Behaviour]
    arities: Tuple[int, ...]


BEHAVIOURS: Dict[str, BehaviourSpec] = {
    "goto": BehaviourSpec(lambda a: GotoBehaviour((a[0], a[1])), (2,)),
    "explore": BehaviourSpec(lambda a: ExploreBehaviour(), (0,)),
    "explore-with-sync-policy": BehaviourSpec(lambda a: ExploreBehaviour(sync_policy=True), (0,)),
    "sync": BehaviourSpec(lambda a: SyncBehaviour(), (0,)),
    "drop-comms-node": BehaviourSpec(lambda a: drop_comms_node((a[0], a[1]) if a else None), (0, 2)),
    "launch-uav": BehaviourSpec(lambda a: LaunchUavBehaviour(), (0,)),
    "wait": BehaviourSpec(lambda a: WaitBehaviour(a[0]), (1,)),
}

_STATEMENT = re.compile(r"[^;]+")
_WORD = re.compile(r"\S+")


def parse(text: str) -> SequenceFsa:
    """
    Parse a command list into a sequence FSA

    Statements are separated by ';' or newlines and words by whitespace.
    The whole list is rejected on the first error.

    Raises:
        CommandListParseError: With the 1-based line and column of the error
    """
    children: List[Behaviour] = []
    for line_no, line in enumerate(text.splitlines() or [""], start=1):
        for statement in _STATEMENT.finditer(line):
            words = list(_WORD.finditer(statement.group()))
            if not words:
                continue
            name_match = words[0]
            column = statement.start() + name_match.start() + 1
            name = name_match.group()
            spec = BEHAVIOURS.get(name)
            if spec is None:
                raise CommandListParseError(f"unknown behaviour '{name}'", line_no, column)
            if len(words) - 1 not in spec.arities:
                expected = " or ".join(str(n) for n in spec.arities)
                raise CommandListParseError(
                    f"'{name}' takes {expected} argument(s), got {len(words) - 1}", line_no, column
                )
            args = []
            for word in words[1:]:
                try:
                    value = float(word.group())
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise CommandListParseError(
                        f"invalid number '{word.group()}'", line_no, statement.start() + word.start() + 1
                    )
                args.append(value)
            if name == "wait" and args[0] < 0:
                raise CommandListParseError("wait needs a non-negative duration", line_no, column)
            children.append(spec.factory(args))
    return SequenceFsa(children, name="command-list")


class Executive:
    """Holds and ticks one agent's current command list."""

    def __init__(self, agent_id: int, tick_period: float = TICK_PERIOD):
        self.agent_id = agent_id
        self.tick_period = tick_period
        self.fsa: Optional[SequenceFsa] = None
        self.text = ""
        self.ticks = 0
        self.next_tick = 0.0

    @property
    def status(self) -> Optional[Status]:
        return None if self.fsa is None else self.fsa.status

    @log_exception_with_context(service="Executive", operation="load")
    def load(self, ctx, text: str, time: float) -> SequenceFsa:
        """
        Replace the running command list

        Raises:
            CommandListParseError: If the text does not parse; the current list keeps running
        """
        fsa = parse(text)
        if self.fsa is not None and self.fsa.status == Status.RUNNING:
            self.fsa.exit(ctx, time)
        self.fsa = fsa
        self.text = text
        logger.info(f"Agent {self.agent_id} loaded command list '{text}' at t={time:.1f}")
        return fsa

    def due(self, time: float) -> bool:
        return time + 1e-9 >= self.next_tick

    def tick(self, ctx, time: float) -> Optional[Status]:
        self.next_tick = time + self.tick_period
        if self.fsa is None:
            return None
        before = self.fsa.status
        status = self.fsa.tick(ctx, time)
        self.ticks += 1
        if status != before and status == Status.FAILED:
            logger.warning(f"Agent {self.agent_id} command list failed at t={time:.0f}")
        return status

    def update(self, ctx, time: float) -> VelocityCommand:
        """Velocity command between ticks; nothing once the list has stopped."""
        if self.fsa is None or self.fsa.status != Status.RUNNING:
            return VelocityCommand()
        return self.fsa.update(ctx, time)
