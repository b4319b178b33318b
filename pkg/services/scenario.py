"""
Scenario loading and validation

A scenario file is JSON with an embedded ASCII map block. Validation
collects every problem it finds instead of stopping at the first one.
"""

import json
import logging
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from models.frame import NoiseConfig
from models.network import WILDCARD, CommsModel, LinkOverride
from models.scenario import DEFAULT_DURATION, EventKind, OperatorEvent, Scenario, SimulationParams
from models.task import PriorityRegion, TaskKind
from models.world import AgentKind, AgentSpec, Artefact, GridWorld
from services.executive import CommandListParseError, parse
from services.world import parse_ascii_map, traversable
from utils.capabilities import Capability, has_capability
from utils.validators import (
    ValidationError,
    validate_agent_id,
    validate_agent_kind,
    validate_artefact_class,
    validate_box,
    validate_choice,
    validate_non_negative,
    validate_non_negative_integer,
    validate_number,
    validate_point,
    validate_pose,
    validate_positive_number,
    validate_unique,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    "name", "seed", "duration", "world", "agents", "comms", "links", "events",
    "params", "noise", "smart_relays",
}


class ScenarioError(Exception):
    """Raised when a scenario fails validation; carries every error found"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__(f"{len(self.errors)} scenario error(s): " + "; ".join(self.errors))


class _Collector:
    """Runs field parsers and turns ValidationErrors into prefixed messages."""

    def __init__(self):
        self.errors: List[str] = []

    def attempt(self, where: str, parser: Callable[[], Any], default: Any = None) -> Any:
        try:
            return parser()
        except ValidationError as e:
            self.errors.append(f"{where}: {e}")
            return default

    def fail(self, where: str, message: str):
        self.errors.append(f"{where}: {message}")


def _override(target, values: Dict[str, Any], where: str, collector: _Collector):
    """Override dataclass fields from a JSON block; unknown keys are errors."""
    if not isinstance(values, dict):
        collector.fail(where, "must be an object")
        return target
    known = {f.name: f for f in fields(target)}
    for key in sorted(values):
        if key not in known:
            collector.fail(where, f"unknown key '{key}'")
            continue
        current = getattr(target, key)
        value = values[key]
        if isinstance(current, bool):
            if not isinstance(value, bool):
                collector.fail(f"{where}.{key}", "must be true or false")
                continue
        elif isinstance(current, int):
            value = collector.attempt(
                f"{where}.{key}", lambda v=value, k=key: validate_non_negative_integer(v, k)
            )
        else:
            value = collector.attempt(f"{where}.{key}", lambda v=value, k=key: validate_non_negative(v, k))
        if value is not None:
            setattr(target, key, value)
    return target


def _parse_world(block: Any, collector: _Collector) -> Optional[GridWorld]:
    if not isinstance(block, dict):
        collector.fail("world", "must be an object")
        return None
    legend = block.get("legend", {})
    if not isinstance(legend, dict):
        collector.fail("world.legend", "must map letters to artefact classes")
        legend = {}
    for letter, label in sorted(legend.items()):
        collector.attempt(f"world.legend.{letter}", lambda lb=label: validate_artefact_class(lb))
    world = collector.attempt(
        "world.map",
        lambda: parse_ascii_map(
            block.get("map"),
            cell_size=validate_positive_number(block.get("cell_size", 0.25), "cell_size"),
            rough_cost=validate_number(block.get("rough_cost", 2.0), "rough_cost"),
            artefact_classes=legend,
        ),
    )
    if world is None:
        return None
    for index, entry in enumerate(block.get("artefacts", [])):
        where = f"world.artefacts[{index}]"
        if not isinstance(entry, dict):
            collector.fail(where, "must be an object")
            continue
        label = collector.attempt(where, lambda e=entry: validate_artefact_class(e.get("label")))
        position = collector.attempt(where, lambda e=entry: validate_point(e.get("position"), "position"))
        if label is None or position is None:
            continue
        row, col = world.cell_of(*position)
        if world.is_wall(row, col):
            collector.fail(where, f"artefact at {position} lies on a wall or outside the map")
            continue
        world.artefacts.append(Artefact(len(world.artefacts) + 1, label, position))
    return world


def _optional_positive(value, field_name: str) -> Optional[float]:
    if value is None:
        return None
    return validate_positive_number(value, field_name)


def _parse_agent(entry: Any, index: int, collector: _Collector) -> Optional[AgentSpec]:
    where = f"agents[{index}]"
    if not isinstance(entry, dict):
        collector.fail(where, "must be an object")
        return None
    agent_id = collector.attempt(where, lambda: validate_agent_id(entry.get("id")))
    kind = collector.attempt(where, lambda: validate_agent_kind(entry.get("kind")))
    start = collector.attempt(where, lambda: validate_pose(entry.get("start", [0.0, 0.0]), "start"))
    speed = collector.attempt(where, lambda: _optional_positive(entry.get("speed"), "speed"))
    width = collector.attempt(where, lambda: _optional_positive(entry.get("passage_width"), "passage_width"))
    sensor_range = collector.attempt(
        where, lambda: validate_positive_number(entry.get("sensor_range", 20.0), "sensor_range")
    )
    carried = entry.get("carried_uav")
    if carried is not None:
        carried = collector.attempt(where, lambda: validate_agent_id(carried))
    drop_nodes = entry.get("drop_nodes")
    if drop_nodes is not None:
        drop_nodes = collector.attempt(where, lambda: validate_non_negative_integer(drop_nodes, "drop_nodes"))
    if agent_id is None or kind is None or start is None:
        return None
    return AgentSpec(
        id=agent_id,
        kind=kind,
        start_pose=start,
        speed=speed,
        passage_width=width,
        sensor_range=sensor_range or 20.0,
        carried_uav=carried,
        drop_nodes=drop_nodes,
    )


def _parse_link(entry: Any, index: int, node_ids: set, collector: _Collector) -> Optional[LinkOverride]:
    where = f"links[{index}]"
    if not isinstance(entry, dict):
        collector.fail(where, "must be an object")
        return None
    t_start = collector.attempt(where, lambda: validate_non_negative(entry.get("t_start", 0.0), "t_start"))
    t_end = collector.attempt(where, lambda: validate_non_negative(entry.get("t_end"), "t_end"))
    nodes = []
    for key in ("a", "b"):
        node = entry.get(key)
        if node != WILDCARD and node not in node_ids:
            collector.fail(where, f"link endpoint '{node}' is neither a known node nor '*'")
        nodes.append(node)
    state = entry.get("state", False)
    if not isinstance(state, bool):
        collector.fail(where, "state must be true or false")
    if t_start is None or t_end is None:
        return None
    if t_end <= t_start:
        collector.fail(where, "t_end must be after t_start")
        return None
    return LinkOverride(t_start, t_end, nodes[0], nodes[1], bool(state))


def parse_region(payload: Dict[str, Any]) -> PriorityRegion:
    """
    Priority region from an operator event payload

    Raises:
        ValidationError: If a field is malformed
    """
    region_id = validate_non_negative_integer(payload.get("id", 0), "region id")
    box = validate_box(payload.get("box"), "box")
    kinds = payload.get("kinds")
    if kinds is not None:
        names = [k.name.lower() for k in TaskKind]
        kinds = tuple(TaskKind[validate_choice(k, names, "task kind").upper()] for k in kinds)
    agents = payload.get("agents")
    if agents is not None:
        agents = tuple(validate_agent_id(a) for a in agents)
    override = payload.get("priority")
    if override is not None:
        override = validate_non_negative_integer(override, "priority")
        if not 1 <= override <= 3:
            raise ValidationError(f"priority must be 1, 2 or 3 (received: {override})")
    multiplier = validate_non_negative(payload.get("reward_multiplier", 1.0), "reward_multiplier")
    return PriorityRegion(region_id, box, kinds, agents, override, multiplier)


def _parse_event(entry: Any, index: int, agent_ids: set, collector: _Collector) -> Optional[OperatorEvent]:
    where = f"events[{index}]"
    if not isinstance(entry, dict):
        collector.fail(where, "must be an object")
        return None
    time = collector.attempt(where, lambda: validate_non_negative(entry.get("time", 0.0), "time"))
    kind = collector.attempt(
        where, lambda: EventKind(validate_choice(entry.get("kind"), [k.value for k in EventKind], "kind"))
    )
    if time is None or kind is None:
        return None
    agent = entry.get("agent")
    if kind in (EventKind.COMMAND, EventKind.RECALL):
        if agent not in agent_ids:
            collector.fail(where, f"event for unknown agent '{agent}'")
            return None
    elif agent is not None:
        collector.fail(where, f"'{kind.value}' events are not addressed to an agent")
    payload = {k: v for k, v in entry.items() if k not in ("time", "kind", "agent")}

    if kind == EventKind.COMMAND:
        text = payload.get("text")
        if not isinstance(text, str):
            collector.fail(where, "command events need a 'text' string")
            return None
        try:
            parse(text)
        except CommandListParseError as e:
            collector.fail(where, f"command list: {e}")
            return None
    elif kind == EventKind.PRIORITY_REGION:
        if collector.attempt(where, lambda: parse_region(payload)) is None:
            return None
    elif kind in (EventKind.MANUAL_TASK, EventKind.DROP_NODE_TASK):
        point = collector.attempt(where, lambda: validate_point(payload.get("point"), "point"))
        reward = collector.attempt(
            where, lambda: validate_non_negative(payload.get("reward", 50.0), "reward")
        )
        tier = collector.attempt(where, lambda: validate_non_negative_integer(payload.get("tier", 2), "tier"))
        if tier is not None and not 1 <= tier <= 3:
            collector.fail(where, f"tier must be 1, 2 or 3 (received: {tier})")
            return None
        if point is None or reward is None or tier is None:
            return None
    return OperatorEvent(time=time, kind=kind, agent=agent, payload=payload)


def _check_team(scenario_agents: List[AgentSpec], world: Optional[GridWorld], collector: _Collector):
    by_id = {a.id: a for a in scenario_agents}
    carried = {}
    for agent in scenario_agents:
        if agent.carried_uav is None:
            continue
        where = f"agent {agent.id}"
        if not has_capability(agent.kind, Capability.CARRY_UAV):
            collector.fail(where, f"{agent.kind.value} cannot carry a UAV")
        uav = by_id.get(agent.carried_uav)
        if uav is None:
            collector.fail(where, f"carried UAV {agent.carried_uav} is not declared")
        elif uav.kind != AgentKind.UAV:
            collector.fail(where, f"carried agent {uav.id} is not a UAV")
        if agent.carried_uav in carried:
            collector.fail(where, f"UAV {agent.carried_uav} is carried twice")
        carried[agent.carried_uav] = agent.id
    if world is None:
        return
    for agent in scenario_agents:
        if agent.id in carried:
            continue
        row, col = world.cell_of(agent.start_pose.x, agent.start_pose.y)
        if not world.in_bounds(row, col) or not traversable(agent.kind, (row, col), world, agent.passage_width):
            collector.fail(f"agent {agent.id}", f"start {agent.start_pose.position} is not traversable")


def parse_scenario(data: Any, name: str = "scenario") -> Tuple[Optional[Scenario], List[str]]:
    """
    Build a scenario from decoded JSON

    Returns:
        (scenario or None, list of errors); the scenario is None whenever an error was found
    """
    collector = _Collector()
    if not isinstance(data, dict):
        return None, ["scenario must be a JSON object"]
    for key in sorted(set(data) - TOP_LEVEL_KEYS):
        collector.fail("scenario", f"unknown key '{key}'")

    world = _parse_world(data.get("world"), collector)

    raw_agents = data.get("agents")
    agents: List[AgentSpec] = []
    if not isinstance(raw_agents, list) or not raw_agents:
        collector.fail("agents", "must be a non-empty list")
    else:
        for index, entry in enumerate(raw_agents):
            agent = _parse_agent(entry, index, collector)
            if agent is not None:
                agents.append(agent)
        collector.attempt("agents", lambda: validate_unique([a.id for a in agents], "agent id"))
    _check_team(agents, world, collector)
    agent_ids = {a.id for a in agents}

    comms = _override(CommsModel(), data.get("comms", {}), "comms", collector)
    params = _override(SimulationParams(), data.get("params", {}), "params", collector)
    noise = _override(NoiseConfig(), data.get("noise", {}), "noise", collector)
    if params.dt <= 0:
        collector.fail("params.dt", "must be positive")

    links = []
    for index, entry in enumerate(data.get("links", [])):
        link = _parse_link(entry, index, agent_ids | {0}, collector)
        if link is not None:
            links.append(link)

    events = []
    raw_events = data.get("events", [])
    if not isinstance(raw_events, list):
        collector.fail("events", "must be a list")
        raw_events = []
    for index, entry in enumerate(raw_events):
        event = _parse_event(entry, index, agent_ids, collector)
        if event is not None:
            events.append(event)
    events.sort(key=lambda e: e.time)

    duration = collector.attempt(
        "duration", lambda: validate_positive_number(data.get("duration", DEFAULT_DURATION), "duration")
    )
    seed = collector.attempt("seed", lambda: validate_non_negative_integer(data.get("seed", 0), "seed"))
    smart_relays = data.get("smart_relays", False)
    if not isinstance(smart_relays, bool):
        collector.fail("smart_relays", "must be true or false")

    if collector.errors:
        return None, collector.errors
    scenario = Scenario(
        name=str(data.get("name", name)),
        world=world,
        agents=sorted(agents, key=lambda a: a.id),
        comms=comms,
        links=links,
        events=events,
        duration=duration,
        seed=seed,
        noise=noise,
        params=params,
        smart_relays=smart_relays,
    )
    return scenario, []


def read_scenario_file(path) -> Any:
    """
    Raises:
        ScenarioError: If the file cannot be read or is not JSON
    """
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise ScenarioError([f"{path}: {e.strerror or e}"])
    except json.JSONDecodeError as e:
        raise ScenarioError([f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"])


def validate_scenario(data: Any) -> List[str]:
    """Every validation error of a decoded scenario (empty when valid)."""
    _, errors = parse_scenario(data)
    return errors


def load_scenario(path) -> Scenario:
    """
    Read and validate a scenario file

    Raises:
        ScenarioError: With every error found
    """
    data = read_scenario_file(path)
    scenario, errors = parse_scenario(data, name=Path(path).stem)
    if errors:
        logger.warning(f"Scenario {path} rejected with {len(errors)} error(s)")
        raise ScenarioError(errors)
    logger.info(f"Loaded scenario '{scenario.name}' with {len(scenario.agents)} agents")
    return scenario
