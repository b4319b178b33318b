"""
Per-agent runtime: wires world sensing, odometry, the shared map, frontier
exploration, the topometric planner, task allocation, the executive and the
artefact channel around one Mule peer. The base station is a reduced runtime
that only holds a map, the task table and incoming reports.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from models.frame import AtlasConfig, Frame, FrameId, Hint, NoiseConfig
from models.frontier import FrontierState
from models.geometry import Pose2
from models.message import MuleConfig, StoredMessage
from models.network import BASE_ID
from models.scenario import Scenario, SimulationParams
from models.task import PriorityRegion, Task, TaskId, TaskKind
from models.world import AgentKind, AgentSpec, AgentState, GridWorld, KnownMap, SensorSweep
from services import codecs
from services.artefacts import ArtefactConfig, ArtefactTracker, ProximityDetector, ReportStore, simulate_detection
from services.atlas import AtlasGraph
from services.codecs import CodecError
from services.executive import CommandListParseError, Executive
from services.frames import FrameBuilder, OdometryDrift, SweepAccumulator, launch_hint, spawn_hint
from services.frontier import (
    FrontierConfig,
    FrontierMap,
    Visibility,
    atlas_resolver,
    clip_returns,
    detect_frontiers,
    frontier_from,
    hpr_visibility,
    viewpoint_from,
)
from services.message_store import InMemoryMessageStore
from services.mule import Mule
from services.navigation import (
    NavigationConfig,
    NavigationContext,
    Navigator,
    nearest_open_cell,
    segment_clear,
)
from services.netsim import NetworkSimulator
from services.tasking import TaskAllocator, TaskingConfig, TaskTable, frontier_tier
from services.topomap import Plan, TopoMap, TopomapConfig, costmap_from_known
from services.world import sense, step_kinematics
from utils.capabilities import Capability, has_capability, require_capability
from utils.mission_logger import log_exception_with_context, mission_logger

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

# Random substreams per agent
SENSE_STREAM = 0
ODOMETRY_STREAM = 1
DETECTION_STREAM = 2

BASE_FRAME = FrameId(BASE_ID, 1)
# Headings tried when backing away from a node, relative to straight behind
RETREAT_OFFSETS = (0.0, 45.0, -45.0, 90.0, -90.0, 135.0, -135.0, 180.0)

# (launched UAV id, carrier state, carrier frame, time) -> (runtime, launch hint)
Spawner = Callable[[int, AgentState, Frame, float], Tuple["AgentRuntime", Hint]]


def substream(seed: int, agent_id: int, stream: int) -> np.random.Generator:
    """Independent generator for one agent subsystem, derived from the run seed."""
    return np.random.default_rng([seed, agent_id, stream])


@dataclass
class AgentConfig:
    params: SimulationParams = field(default_factory=SimulationParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    atlas: AtlasConfig = field(default_factory=AtlasConfig)
    frontier: FrontierConfig = field(default_factory=FrontierConfig)
    topomap: TopomapConfig = field(default_factory=TopomapConfig)
    tasking: TaskingConfig = field(default_factory=TaskingConfig)
    artefacts: ArtefactConfig = field(default_factory=ArtefactConfig)
    navigation: NavigationConfig = field(default_factory=NavigationConfig)
    mule: MuleConfig = field(default_factory=MuleConfig)
    # Builds the Mule store for an agent id; None keeps stores in memory
    store_factory: Optional[Callable[[int], InMemoryMessageStore]] = None

    def new_store(self, agent_id: int) -> Optional[InMemoryMessageStore]:
        return self.store_factory(agent_id) if self.store_factory else None

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "AgentConfig":
        noise = scenario.noise
        artefacts = ArtefactConfig(
            sigma_base=noise.detection_sigma, sigma_per_meter=noise.detection_sigma_per_meter
        )
        return cls(params=scenario.params, noise=noise, artefacts=artefacts)


def _decoded(decoder, message: StoredMessage, owner: int):
    try:
        return decoder(message.payload)
    except CodecError as e:
        logger.warning(f"Agent {owner} dropped malformed {message.id.topic} message {message.id}: {e}")
        return None


class AgentRuntime:
    """
    One simulated robot and its onboard autonomy

    The runtime is also the context object its executive behaviours act
    through. Positions handed to behaviours and the allocator are global
    (base-relative) coordinates as estimated by the agent's own atlas.
    """

    def __init__(
        self,
        spec: AgentSpec,
        world: GridWorld,
        network: NetworkSimulator,
        config: Optional[AgentConfig] = None,
        seed: int = 0,
        regions: Optional[List[PriorityRegion]] = None,
        state: Optional[AgentState] = None,
        spawner: Optional[Spawner] = None,
    ):
        self.spec = spec
        self.agent_id = spec.id
        self.kind = spec.kind
        self.world = world
        self.network = network
        self.config = config or AgentConfig()
        self.state = state or AgentState.spawn(spec)
        self.spawner = spawner
        self.time = 0.0

        self.rng_sense = substream(seed, spec.id, SENSE_STREAM)
        self.rng_detect = substream(seed, spec.id, DETECTION_STREAM)
        self.drift = OdometryDrift(self.config.noise, substream(seed, spec.id, ODOMETRY_STREAM))

        self.known = KnownMap(world.rows, world.cols, world.cell_size)
        self.sweeps = SweepAccumulator(self.config.atlas.frame_window)
        self.frames = FrameBuilder(spec.id, self.config.atlas, self.config.noise)
        self.atlas = AtlasGraph(spec.id, reference=world.base_pose, config=self.config.atlas)
        self.mule = Mule(spec.id, network, store=self.config.new_store(spec.id), config=self.config.mule)
        self.frontiers = FrontierMap(spec.id, self.config.frontier)
        self.topomap = TopoMap(self.config.topomap)
        self.table = TaskTable(spec.id, self.config.tasking, publish=self._publish_task)
        self.allocator = TaskAllocator(spec.id, self.table, self.config.tasking, regions)
        self.tracker = ArtefactTracker(spec.id, self.config.artefacts)
        self.proximity = ProximityDetector(self.config.artefacts)
        self.executive = Executive(spec.id)
        self.navigator = Navigator(
            NavigationContext(
                state=lambda: self.state,
                believed=self.believed_pose,
                to_world=self.to_world,
                plan_global=self.plan_global,
                known=self.known,
                on_new_goal=self._reset_blocked,
            ),
            self.config.navigation,
        )

        self.mrta = False
        self.sync_policy = False
        self.last_sweep: Optional[SensorSweep] = None
        self.last_base_contact = 0.0
        self._topomap_dirty = False
        self._atlas_changed = False
        self._frontier_odom: Optional[Pose2] = None
        params = self.config.params
        self._next_sense = 0.0
        self._next_optimize = params.optimize_period
        self._next_costmap = params.costmap_period
        self._next_status = 0.0
        self._next_detection = 0.0
        self._next_bid = 0.0

        network.add_node(spec.id, self.state.pose.position)
        self.mule.subscribe("frames", self._on_frame)
        self.mule.subscribe("hints", self._on_hint)
        self.mule.subscribe("frontiers", self._on_frontier)
        self.mule.subscribe("costmaps", self._on_costmap)
        self.mule.subscribe("tasks", self._on_task)
        self.mule.subscribe("status", self._on_status)

    # --- subscriptions -------------------------------------------------------

    def _publish_task(self, task: Task):
        self.mule.publish("tasks", codecs.encode_task(task), self.time)

    def _on_frame(self, message: StoredMessage):
        frame = _decoded(codecs.decode_frame, message, self.agent_id)
        if frame is not None:
            self.atlas.add_frame(frame)

    def _on_hint(self, message: StoredMessage):
        hint = _decoded(codecs.decode_hint, message, self.agent_id)
        if hint is not None:
            self.atlas.add_hint(hint)

    def _on_frontier(self, message: StoredMessage):
        frontier = _decoded(codecs.decode_frontier, message, self.agent_id)
        if frontier is not None:
            self.frontiers.add_frontier(frontier)

    def _on_costmap(self, message: StoredMessage):
        bundle = _decoded(codecs.decode_costmap, message, self.agent_id)
        if bundle is not None:
            self.topomap.add_bundle(bundle, self.atlas)
            self._topomap_dirty = True

    def _on_task(self, message: StoredMessage):
        self.table.merge_payload(message.payload)

    def _on_status(self, message: StoredMessage):
        status = _decoded(codecs.decode_status, message, self.agent_id)
        if status is None:
            return
        agent, frame_ref, point, _ = status
        position = self.atlas.resolve(frame_ref, point)
        if agent != self.agent_id and position is not None:
            self.frontiers.record_trail(agent, position)

    # --- coordinates ---------------------------------------------------------

    def odom_to_global(self) -> Pose2:
        """Transform from odometry to global coordinates through the latest placed own frame."""
        for frame in reversed(self.frames.frames):
            pose = self.atlas.pose_of(frame.id)
            if pose is not None:
                return pose.compose(frame.odom_pose.inverse())
        return self.world.base_pose.inverse()

    def believed_pose(self) -> Pose2:
        return self.odom_to_global().compose(self.state.odom)

    def believed_position(self) -> Point:
        return self.believed_pose().position

    def odom_to_world(self) -> Pose2:
        return self.state.pose.compose(self.state.odom.inverse())

    def to_world(self, point: Point) -> Point:
        """Global point to the world position the agent would actually drive to."""
        return self.state.pose.compose(self.believed_pose().inverse()).transform_point(point)

    def locate_task(self, task: Task) -> Optional[Point]:
        return self.atlas.resolve(task.frame_ref, task.point)

    def _frame_reference(self, point: Point) -> Optional[Tuple[FrameId, Point]]:
        """Nearest own frame (by odometry pose) and the point in its coordinates."""
        if not self.frames.frames:
            return None
        nearest = min(
            self.frames.frames,
            key=lambda f: (math.hypot(f.odom_pose.x - point[0], f.odom_pose.y - point[1]), f.id),
        )
        return nearest.id, nearest.odom_pose.inverse().transform_point(point)

    # --- planning ------------------------------------------------------------

    def _refresh_topomap(self):
        if self._topomap_dirty:
            self.topomap.refresh(self.atlas)
            self._topomap_dirty = False

    def plan_global(self, start: Point, goal: Point) -> Optional[Plan]:
        self._refresh_topomap()
        spec = self.spec
        return self.topomap.plan(start, goal, spec.kind, spec.speed, spec.passage_width, self.atlas)

    def travel_times(self, start: Point, goals: List[Point]) -> List[Optional[float]]:
        self._refresh_topomap()
        spec = self.spec
        return self.topomap.travel_times(start, goals, spec.kind, spec.speed, spec.passage_width, self.atlas)

    def _reset_blocked(self):
        self.state = replace(self.state, navigation_failed=False, blocked_ticks=0, blocked_target=None)

    # --- behaviour context ---------------------------------------------------

    def report_navigation_failure(self, target, reason: str):
        mission_logger.log_navigation_failure(self.agent_id, self.time, target, reason)

    def begin_task(self, task: Task):
        logger.debug(f"Agent {self.agent_id} executing {task.kind.name} task {task.id}")

    def _owned(self, task_id: TaskId) -> Optional[Task]:
        row = self.table.get(task_id)
        if row is None or not row.is_claimed or row.owner != self.agent_id:
            return None
        return row

    def complete_task(self, task_id: TaskId):
        if self._owned(task_id) is not None:
            self.table.complete(task_id, self.time)

    def fail_task(self, task_id: TaskId):
        if self._owned(task_id) is not None:
            self.table.report_failure(task_id, self.time)

    def start_mrta(self, sync_policy: bool = False):
        self.mrta = True
        self.sync_policy = sync_policy
        self._next_bid = self.time

    def stop_mrta(self):
        self.allocator.prune()
        self.allocator.release_all(self.time)
        self.mrta = False
        self.sync_policy = False

    def exploration_finished(self) -> bool:
        """Something was seen, every own frontier became a task and no Explore task is left."""
        if not self.frontiers.viewpoints:
            return False
        if any(f.id not in self.table for f in self.frontiers.active() if f.id.creator == self.agent_id):
            return False
        for task in self.table.rows.values():
            if task.kind != TaskKind.EXPLORE:
                continue
            if task.is_claimed or self.table.is_open(task, self.time):
                return False
        return True

    def task_satisfied(self, task: Task) -> bool:
        row = self.table.get(task.id)
        if row is not None and row.is_complete:
            return True
        frontier = self.frontiers.frontiers.get(task.id)
        return frontier is not None and not frontier.is_active

    def synced_since(self, time: float) -> bool:
        return self.mule.unsynced_to_base_bytes() == 0 or self.mule.holds_all_created_before(BASE_ID, time)

    def base_reachable(self) -> bool:
        return self.network.reachable(self.agent_id, BASE_ID)

    def sync_target(self) -> Optional[Point]:
        """The base, or a relay linked to it, whichever is quickest to reach."""
        to_global = self.world.base_pose.inverse()
        candidates = [(0.0, 0.0)]
        for relay_id in sorted(self.network.relays):
            if self.network.reachable(relay_id, BASE_ID):
                candidates.append(to_global.transform_point(self.network.relays[relay_id].position))
        start = self.believed_position()
        times = self.travel_times(start, candidates)
        reachable = [(t, k) for k, t in enumerate(times) if t is not None]
        if reachable:
            return candidates[min(reachable)[1]]
        distances = [math.hypot(c[0] - start[0], c[1] - start[1]) for c in candidates]
        return candidates[int(np.argmin(distances))]

    def drop_node(self) -> Point:
        """
        Deploy a relay where the agent stands

        Raises:
            CapabilityError: If the platform carries no drop nodes
            DropNodeUnavailable: If none is left
        """
        require_capability(self.agent_id, self.kind, Capability.DROP_COMMS_NODE)
        self.network.drop_node(self.state, self.time)
        return self.believed_position()

    def retreat_point(self, node: Point, distance: float) -> Point:
        pose = self.believed_pose()
        mask = self.known.traversable_mask(self.spec.passage_width)
        behind = pose.theta + math.pi
        fallback = None
        for offset in RETREAT_OFFSETS:
            heading = behind + math.radians(offset)
            candidate = (node[0] + distance * math.cos(heading), node[1] + distance * math.sin(heading))
            if fallback is None:
                fallback = candidate
            if segment_clear(mask, self.world.cell_size, self.state.pose.position, self.to_world(candidate)):
                return candidate
        return fallback

    @log_exception_with_context(service="AgentRuntime", operation="launch_uav")
    def launch_uav(self) -> Optional[int]:
        """Release the carried UAV; None if there is nothing to launch."""
        uav_id = self.spec.carried_uav
        if not self.state.uav_carried or uav_id is None or self.spawner is None:
            return None
        if not has_capability(self.kind, Capability.CARRY_UAV):
            logger.warning(f"Agent {self.agent_id} ({self.kind.value}) cannot carry a UAV")
            return None
        carrier_frame = self.frames.latest()
        if carrier_frame is None:
            logger.info(f"Agent {self.agent_id} waits for its first frame before launching")
            return None
        _, hint = self.spawner(uav_id, self.state, carrier_frame, self.time)
        self.state.uav_carried = False
        self.atlas.add_hint(hint)
        mission_logger.log_uav_launch(self.agent_id, self.time, uav_id)
        return uav_id

    # --- operator ------------------------------------------------------------

    def load_command(self, text: str, time: float) -> bool:
        try:
            self.executive.load(self, text, time)
        except CommandListParseError as e:
            logger.error(f"Agent {self.agent_id} rejected command list at t={time:.1f}: {e}")
            return False
        return True

    def recall(self, time: float):
        """Return to base communications; the running list releases its tasks on exit."""
        logger.info(f"Agent {self.agent_id} recalled at t={time:.1f}")
        self.load_command("sync", time)

    # --- pipeline ------------------------------------------------------------

    def launch(self, carrier_frame: Frame, time: float) -> Hint:
        """First frame of a freshly launched UAV, tied to its carrier's latest frame."""
        self.time = time
        self._sense(time)
        frame = self._make_frame(time)
        hint = launch_hint(carrier_frame, frame)
        self.atlas.add_hint(hint)
        self.mule.publish("hints", codecs.encode_hint(hint), time)
        return hint

    def _sense(self, time: float):
        sweep = sense(self.state, self.world, self.rng_sense, self.config.noise.range_sigma, time)
        self.sweeps.add(sweep)
        if self.known.update(sweep.free_cells, sweep.occupied_cells, self.world):
            self._topomap_dirty = True
        self.last_sweep = sweep
        self._next_sense = time + self.config.params.sense_period

    def _make_frame(self, time: float) -> Frame:
        frame = self.frames.make_frame(time, self.state.odom, self.sweeps)
        self.atlas.add_frame(frame)
        self.mule.publish("frames", codecs.encode_frame(frame), time)
        return frame

    def _update_frames(self, time: float):
        if not self.frames.due(time):
            return
        first = self.frames.latest() is None
        frame = self._make_frame(time)
        if first:
            hint = spawn_hint(self.world.base_pose, frame)
            self.atlas.add_hint(hint)
            self.mule.publish("hints", codecs.encode_hint(hint), time)

    def _update_atlas(self, time: float):
        if time + 1e-9 < self._next_optimize:
            return
        self._next_optimize = time + self.config.params.optimize_period
        if self.atlas.dirty and self.atlas.refresh(time):
            self._topomap_dirty = True
            self._atlas_changed = True

    def _update_frontiers(self, time: float):
        if self.last_sweep is None:
            return
        odom = self.state.odom
        moved = self._frontier_odom is None or odom.distance_to(self._frontier_odom) >= self.config.frontier.cull_motion
        frame = self.frames.latest()
        if moved and frame is not None:
            self._frontier_odom = odom
            visibility = self._viewpoint(frame, time)
            # New frontiers are deduplicated only against ones that survive the new viewpoint
            self._cull_frontiers()
            self._add_frontiers(visibility, frame, time)
            self._atlas_changed = False
        elif self._atlas_changed:
            self._cull_frontiers()
            self._atlas_changed = False

    def _viewpoint(self, frame: Frame, time: float) -> Visibility:
        config = self.config.frontier
        sweep = self.last_sweep
        origin = sweep.origin.position
        near, clear = clip_returns(sweep.points, origin, config.frontier_range, sweep.open_headings)
        visibility = hpr_visibility(near, origin, config.frontier_range, config, clear=clear)
        self.frontiers.add_viewpoint(viewpoint_from(visibility, frame.id, frame.odom_pose, time))
        return visibility

    def _add_frontiers(self, visibility: Visibility, frame: Frame, time: float):
        config = self.config.frontier
        to_world = self.odom_to_world()
        from_world = to_world.inverse()
        mask = self.known.traversable_mask(self.spec.passage_width)
        cs = self.world.cell_size

        def is_occupied(point: Point) -> bool:
            x, y = to_world.transform_point(point)
            return self.known.is_occupied(int(math.floor(y / cs)), int(math.floor(x / cs)))

        def snap(point: Point, radius: float) -> Optional[Point]:
            cell = nearest_open_cell(mask, cs, to_world.transform_point(point), radius)
            if cell is None:
                return None
            return from_world.transform_point(self.world.cell_center(*cell))

        to_global = self.odom_to_global()
        resolve = atlas_resolver(self.atlas)
        for detected in detect_frontiers(visibility, config, is_occupied, snap):
            if self.frontiers.is_duplicate(to_global.transform_point(detected.observer.position), resolve):
                continue
            frontier = frontier_from(detected, self.table.next_id(), frame.id, frame.odom_pose)
            self.frontiers.add_frontier(frontier)
            self.mule.publish("frontiers", codecs.encode_frontier(frontier), time)

    def _cull_frontiers(self):
        self.frontiers.recull(atlas_resolver(self.atlas))
        for frontier_id, frontier in self.frontiers.frontiers.items():
            task = self.table.get(frontier_id)
            if task is not None and task.is_complete:
                frontier.state = FrontierState.CULLED

    def _update_costmap(self, time: float):
        if time + 1e-9 < self._next_costmap:
            return
        self._next_costmap = time + self.config.params.costmap_period
        latest = self.atlas.latest_frame(self.agent_id)
        if latest is None:
            return
        root = self.atlas.root_of(latest)
        odom = self.atlas.odom.get(root)
        if odom is None:
            return
        bundle = costmap_from_known(self.known, root, odom, self.odom_to_world(), self.config.topomap)
        if bundle is None:
            return
        self.topomap.add_bundle(bundle, self.atlas)
        self._topomap_dirty = True
        self.mule.publish("costmaps", codecs.encode_costmap(bundle), time)

    def _eligible(self, task: Task) -> bool:
        if task.kind == TaskKind.SYNC_DATA:
            return task.id.creator == self.agent_id
        if task.kind == TaskKind.DROP_NODE:
            return has_capability(self.kind, Capability.DROP_COMMS_NODE) and self.state.drop_nodes_left > 0
        return has_capability(self.kind, Capability.EXPLORE)

    def _update_tasks(self, time: float):
        if not self.mrta:
            return
        config = self.config.tasking
        resolve = atlas_resolver(self.atlas)
        for frontier in self.frontiers.active():
            if frontier.id.creator != self.agent_id or frontier.id in self.table:
                continue
            reward = self.frontiers.reward(frontier, resolve)
            if reward <= 0.0:
                continue
            self.table.create(
                TaskKind.EXPLORE,
                frontier.frame_ref,
                frontier.observer.position,
                reward,
                frontier_tier(frontier.size, config),
                task_id=frontier.id,
            )
        for frontier_id in sorted(self.frontiers.frontiers):
            frontier = self.frontiers.frontiers[frontier_id]
            task = self.table.get(frontier_id)
            if not frontier.is_active and task is not None and not task.is_complete:
                self.table.complete(frontier_id, time)

        if self.sync_policy and not any(
            t.id.creator == self.agent_id for t in self.table.pending(TaskKind.SYNC_DATA)
        ):
            overdue = time - self.last_base_contact > config.sync_interval
            if self.mule.unsynced_to_base_bytes() > config.sync_bytes or overdue:
                self.table.create(TaskKind.SYNC_DATA, BASE_FRAME, (0.0, 0.0), config.sync_reward, tier=3)

        if time + 1e-9 >= self._next_bid:
            self._next_bid = time + config.bid_period
            self.allocator.bid_round(
                self.believed_position(), time, self.locate_task, self.travel_times, self._eligible
            )

    def _move(self, time: float, dt: float):
        command = self.executive.update(self, time)
        previous = self.state
        moved = step_kinematics(previous, command, dt, self.world)
        delta = moved.last_delta
        self.state = replace(moved, odom=self.drift.integrate(previous.odom, delta))
        self.frames.add_distance(math.hypot(delta.x, delta.y))
        self.network.set_position(self.agent_id, self.state.pose.position)

    def _update_artefacts(self, time: float):
        if time + 1e-9 < self._next_detection:
            return
        self._next_detection = time + self.config.artefacts.detection_period
        for artefact in self.world.artefacts:
            if artefact.is_signal:
                continue
            detection = simulate_detection(self.state, artefact, self.world, self.rng_detect, time, self.config.artefacts)
            if detection is not None:
                self.tracker.update(detection)
        self.tracker.expire(time)
        reports = self.tracker.throttle_and_send(time, self._frame_reference)
        for artefact, position in self.proximity.update(self.state, self.world.artefacts):
            report = self.tracker.signal_report(artefact.label, position, time, self._frame_reference)
            if report is not None:
                reports.append(report)
        for report in reports:
            self.mule.publish("artefacts", codecs.encode_report(report), time)

    def finish_encounters(self, time: float):
        """Report every signal encounter still open at the end of a run."""
        for artefact, position in self.proximity.finish(self.world.artefacts):
            report = self.tracker.signal_report(artefact.label, position, time, self._frame_reference)
            if report is not None:
                self.mule.publish("artefacts", codecs.encode_report(report), time)

    def _update_status(self, time: float):
        if time + 1e-9 < self._next_status:
            return
        self._next_status = time + self.config.params.status_period
        self.frontiers.record_trail(self.agent_id, self.believed_position())
        frame = self.frames.latest()
        if frame is None:
            return
        point = frame.odom_pose.inverse().transform_point(self.state.odom.position)
        self.mule.publish("status", codecs.encode_status(self.agent_id, frame.id, point, time), time)

    @log_exception_with_context(service="AgentRuntime", operation="step")
    def step(self, time: float, dt: float):
        """Advance the agent by one tick (its Mule has already consumed arrivals)."""
        self.time = time
        if self.base_reachable():
            self.last_base_contact = time
        if time + 1e-9 >= self._next_sense:
            self._sense(time)
        self._update_frames(time)
        self._update_atlas(time)
        self._update_frontiers(time)
        self._update_costmap(time)
        self._update_tasks(time)
        if self.executive.due(time):
            self.executive.tick(self, time)
        self._move(time, dt)
        self._update_artefacts(time)
        self._update_status(time)


class BaseStation:
    """
    Operator-side node: a static sensor that seeds the shared frame, a task
    table for operator tasks and the report intake
    """

    def __init__(
        self,
        world: GridWorld,
        network: NetworkSimulator,
        config: Optional[AgentConfig] = None,
        seed: int = 0,
    ):
        self.world = world
        self.network = network
        self.config = config or AgentConfig()
        self.time = 0.0
        spec = AgentSpec(id=BASE_ID, kind=AgentKind.LARGE_UGV, start_pose=world.base_pose, drop_nodes=0)
        self.state = AgentState.spawn(spec)
        self.rng = substream(seed, BASE_ID, SENSE_STREAM)
        self.sweeps = SweepAccumulator(self.config.atlas.frame_window)
        self.frames = FrameBuilder(BASE_ID, self.config.atlas, NoiseConfig.zero())
        self.atlas = AtlasGraph(BASE_ID, reference=world.base_pose, config=self.config.atlas)
        self.mule = Mule(BASE_ID, network, store=self.config.new_store(BASE_ID), config=self.config.mule)
        self.table = TaskTable(BASE_ID, self.config.tasking, publish=self._publish_task)
        self.reports = ReportStore()
        self.malformed_reports = 0
        self._next_optimize = self.config.params.optimize_period

        network.add_node(BASE_ID, world.base_pose.position)
        self.mule.subscribe("frames", self._on_frame)
        self.mule.subscribe("hints", self._on_hint)
        self.mule.subscribe("tasks", self._on_task)
        self.mule.subscribe("artefacts", self._on_report)

    def _publish_task(self, task: Task):
        self.mule.publish("tasks", codecs.encode_task(task), self.time)

    def _on_frame(self, message: StoredMessage):
        frame = _decoded(codecs.decode_frame, message, BASE_ID)
        if frame is not None:
            self.atlas.add_frame(frame)

    def _on_hint(self, message: StoredMessage):
        hint = _decoded(codecs.decode_hint, message, BASE_ID)
        if hint is not None:
            self.atlas.add_hint(hint)

    def _on_task(self, message: StoredMessage):
        self.table.merge_payload(message.payload)

    def _on_report(self, message: StoredMessage):
        report = _decoded(codecs.decode_report, message, BASE_ID)
        if report is None:
            self.malformed_reports += 1
            return
        self.reports.add(report)

    def create_task(self, kind: TaskKind, point: Point, reward: float, tier: int, time: float) -> Task:
        """Operator task at a global point (the base frame's coordinates)."""
        self.time = time
        task = self.table.create(kind, BASE_FRAME, point, reward, tier)
        logger.info(f"Operator created {kind.name} task {task.id} at {point} (t={time:.1f})")
        return task

    @log_exception_with_context(service="BaseStation", operation="step")
    def step(self, time: float):
        self.time = time
        if self.frames.latest() is None and self.frames.due(time):
            sweep = sense(self.state, self.world, self.rng, 0.0, time)
            self.sweeps.add(sweep)
            frame = self.frames.make_frame(time, self.state.odom, self.sweeps)
            self.atlas.add_frame(frame)
            self.mule.publish("frames", codecs.encode_frame(frame), time)
        if time + 1e-9 >= self._next_optimize:
            self._next_optimize = time + self.config.params.optimize_period
            if self.atlas.dirty:
                self.atlas.refresh(time)

    def ingested(self) -> List[Tuple]:
        return self.reports.ingested(self.atlas)
