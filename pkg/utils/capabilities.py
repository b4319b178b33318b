"""
Platform capability management module
Defines which behaviours each platform kind may execute
"""

from enum import Enum

from models.world import AgentKind


class Capability(Enum):
    """Enumeration of platform capabilities"""

    DRIVE = "drive"
    FLY = "fly"
    CROSS_ROUGH = "cross_rough"
    DROP_COMMS_NODE = "drop_comms_node"
    CARRY_UAV = "carry_uav"
    EXPLORE = "explore"
    SYNC = "sync"


class CapabilityError(Exception):
    """Exception raised when a platform cannot perform an action"""


KIND_CAPABILITIES = {
    AgentKind.LARGE_UGV: [
        Capability.DRIVE,
        Capability.DROP_COMMS_NODE,
        Capability.CARRY_UAV,
        Capability.EXPLORE,
        Capability.SYNC,
    ],
    AgentKind.SMALL_UGV: [
        Capability.DRIVE,
        Capability.EXPLORE,
        Capability.SYNC,
    ],
    # UAVs fly over rough terrain but still respect walls
    AgentKind.UAV: [
        Capability.FLY,
        Capability.CROSS_ROUGH,
        Capability.EXPLORE,
        Capability.SYNC,
    ],
}


def has_capability(kind, capability: Capability) -> bool:
    """
    Checks if a platform kind has a given capability

    Args:
        kind: AgentKind (or its string value), can be None
        capability: The capability to check

    Returns:
        True if the platform has the capability, False otherwise
    """
    if kind is None:
        return False
    try:
        kind = AgentKind(kind)
    except ValueError:
        return False
    return capability in KIND_CAPABILITIES[kind]


def require_capability(agent_id: int, kind, capability: Capability) -> None:
    """
    Checks that a platform has a capability, otherwise raises an exception

    Raises:
        CapabilityError: If the platform doesn't have the capability
    """
    if not has_capability(kind, capability):
        kind_name = kind.value if isinstance(kind, AgentKind) else kind
        raise CapabilityError(
            f"Agent {agent_id} ({kind_name}) cannot '{capability.value}'"
        )
