"""
Deterministic fixed-step simulation of a scenario

One logical timeline: each tick applies due operator events, moves bytes
through the network, lets every Mule consume its arrivals, steps the
agents in id order and then the base station.
"""

import logging
from collections import defaultdict, deque
from typing import Callable, Deque, Dict, List, Optional, Tuple

from models.frame import Frame, Hint
from models.metrics import MetricsLog
from models.scenario import EventKind, OperatorEvent, Scenario
from models.task import PriorityRegion, TaskKind
from models.world import AgentState
from services.agent import AgentConfig, AgentRuntime, BaseStation
from services.artefacts import score
from services.metrics import MetricsRecorder, build_summary, reports_document
from services.message_store import InMemoryMessageStore
from services.mule import Mule
from services.netsim import NetworkSimulator
from services.scenario import parse_region
from utils.mission_logger import log_exception_with_context
from utils.sentry_config import log_run_start, log_run_summary

logger = logging.getLogger(__name__)

DEFAULT_COMMAND = "explore"


def tick_time(index: int, dt: float) -> float:
    return round(index * dt, 9)


class Simulation:
    """
    A single run of a scenario

    Args:
        scenario: A validated scenario
        seed: Overrides the scenario seed
        until: Stops the run early (simulated seconds)
        store_factory: Builds each Mule store, e.g. a journaled one
    """

    def __init__(
        self,
        scenario: Scenario,
        seed: Optional[int] = None,
        until: Optional[float] = None,
        store_factory: Optional[Callable[[int], InMemoryMessageStore]] = None,
    ):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.duration = scenario.duration if until is None else min(until, scenario.duration)
        self.params = scenario.params
        self.world = scenario.world
        self.config = AgentConfig.from_scenario(scenario)
        self.config.store_factory = store_factory
        self.network = NetworkSimulator(self.world, scenario.comms, scenario.links, scenario.smart_relays)
        self.regions: List[PriorityRegion] = []
        self.base = BaseStation(self.world, self.network, self.config, self.seed)
        self.recorder = MetricsRecorder(self.world)
        self.agents: Dict[int, AgentRuntime] = {}
        self.relay_mules: Dict[int, Mule] = {}
        self.time = 0.0
        self.ticks = 0
        self._events: Deque[OperatorEvent] = deque(scenario.events)
        self._deferred: Dict[int, List[OperatorEvent]] = defaultdict(list)

        carried = set(scenario.carried)
        for spec in scenario.agents:
            if spec.id not in carried:
                self._add_agent(AgentRuntime(
                    spec, self.world, self.network, self.config, self.seed, self.regions,
                    spawner=self._launch,
                ))

    def _add_agent(self, agent: AgentRuntime):
        self.agents[agent.agent_id] = agent
        self.recorder.register(agent)

    # --- operator events -----------------------------------------------------

    def _launch(self, uav_id: int, carrier: AgentState, carrier_frame: Frame, time: float) -> Tuple[AgentRuntime, Hint]:
        spec = self.scenario.agent(uav_id)
        state = AgentState.spawn(spec, pose=carrier.pose, odom=carrier.odom)
        uav = AgentRuntime(
            spec, self.world, self.network, self.config, self.seed, self.regions,
            state=state, spawner=self._launch,
        )
        hint = uav.launch(carrier_frame, time)
        self._add_agent(uav)
        logger.info(f"UAV {uav_id} launched from agent {carrier.spec.id} at t={time:.1f}")
        deferred = self._deferred.pop(uav_id, [])
        if not any(e.kind in (EventKind.COMMAND, EventKind.RECALL) for e in deferred):
            uav.load_command(DEFAULT_COMMAND, time)
        for event in deferred:
            self._apply(event, time)
        return uav, hint

    def _apply(self, event: OperatorEvent, time: float):
        payload = event.payload
        if event.kind in (EventKind.COMMAND, EventKind.RECALL):
            agent = self.agents.get(event.agent)
            if agent is None:
                logger.info(f"Agent {event.agent} not deployed yet; holding {event.kind.value} event")
                self._deferred[event.agent].append(event)
            elif event.kind == EventKind.COMMAND:
                agent.load_command(payload["text"], time)
            else:
                agent.recall(time)
        elif event.kind == EventKind.PRIORITY_REGION:
            region = parse_region(payload)
            self.regions.append(region)
            logger.info(f"Priority region {region.id} {region.box} active from t={time:.1f}")
        elif event.kind == EventKind.MANUAL_TASK:
            self.base.create_task(
                TaskKind.MANUAL, tuple(payload["point"]), payload.get("reward", 50.0), payload.get("tier", 2), time
            )
        elif event.kind == EventKind.DROP_NODE_TASK:
            self.base.create_task(
                TaskKind.DROP_NODE, tuple(payload["point"]), payload.get("reward", 50.0), payload.get("tier", 2), time
            )

    def _apply_due_events(self, time: float):
        while self._events and self._events[0].time <= time + 1e-9:
            self._apply(self._events.popleft(), time)

    # --- loop ----------------------------------------------------------------

    def _step_mules(self, time: float):
        for relay_id in sorted(self.network.relays):
            relay = self.network.relays[relay_id]
            if relay.smart and relay_id not in self.relay_mules:
                self.relay_mules[relay_id] = Mule(
                    relay_id, self.network, store=self.config.new_store(relay_id), config=self.config.mule
                )
        self.base.mule.step(time)
        for agent_id in sorted(self.agents):
            self.agents[agent_id].mule.step(time)
        for relay_id in sorted(self.relay_mules):
            self.relay_mules[relay_id].step(time)

    def step(self, time: float):
        dt = self.params.dt
        self.time = time
        self._apply_due_events(time)
        self.network.step(time, dt)
        self._step_mules(time)
        for agent_id in sorted(self.agents):
            self.agents[agent_id].step(time, dt)
        self.base.step(time)

    def sorted_agents(self) -> List[AgentRuntime]:
        return [self.agents[k] for k in sorted(self.agents)]

    @log_exception_with_context(service="Simulation", operation="run")
    def run(self) -> MetricsLog:
        """
        Run to the end of the mission

        Returns:
            The metrics log with time series, summary and scored reports
        """
        log_run_start(self.scenario.name, self.seed, self.duration)
        dt = self.params.dt
        ticks = int(round(self.duration / dt))
        sample_every = max(1, int(round(self.params.metrics_period / dt)))
        for index in range(ticks):
            time = tick_time(index, dt)
            self.step(time)
            self.ticks = index + 1
            if index % sample_every == 0:
                self.recorder.sample(time, self.sorted_agents(), self.network)
        return self.finish()

    def finish(self) -> MetricsLog:
        """Close open encounters, score what the base ingested and assemble the log."""
        end = tick_time(self.ticks, self.params.dt)
        for agent in self.sorted_agents():
            agent.finish_encounters(end)
        result = score(
            self.base.ingested(), self.world.artefacts, self.world.base_pose, self.config.artefacts
        )
        log = self.recorder.log
        log.summary = build_summary(
            self.scenario,
            self.seed,
            self.duration,
            self.sorted_agents(),
            self.base,
            self.network,
            self.recorder,
            result,
            [self.relay_mules[k] for k in sorted(self.relay_mules)],
        )
        log.reports = reports_document(result, self.world.artefacts, self.world.base_pose, self.config.artefacts)
        log_run_summary(self.scenario.name, log.summary)
        return log


def run(
    scenario: Scenario,
    seed: Optional[int] = None,
    until: Optional[float] = None,
    store_factory: Optional[Callable[[int], InMemoryMessageStore]] = None,
) -> MetricsLog:
    return Simulation(scenario, seed, until, store_factory).run()
