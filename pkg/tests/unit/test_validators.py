"""
Tests for scenario field validators and platform capabilities
"""

import math

import pytest

from models.geometry import Pose2
from models.world import AgentKind
from utils.capabilities import Capability, CapabilityError, has_capability, require_capability
from utils.validators import (
    ValidationError,
    validate_agent_id,
    validate_agent_kind,
    validate_artefact_class,
    validate_box,
    validate_choice,
    validate_map_lines,
    validate_non_negative,
    validate_non_negative_integer,
    validate_number,
    validate_point,
    validate_pose,
    validate_positive_number,
    validate_unique,
)


class TestNumberValidators:
    """Tests for numeric validation"""

    def test_numbers_accepted(self):
        assert validate_number("2.5") == 2.5
        assert validate_positive_number(3) == 3.0
        assert validate_non_negative(0) == 0.0

    @pytest.mark.parametrize("value", [True, None, "abc", math.nan, math.inf, [1]])
    def test_not_a_finite_number(self, value):
        with pytest.raises(ValidationError):
            validate_number(value)

    def test_sign_checks(self):
        with pytest.raises(ValidationError, match="must be positive"):
            validate_positive_number(0, "duration")
        with pytest.raises(ValidationError, match="cannot be negative"):
            validate_non_negative(-0.1, "reward")

    @pytest.mark.parametrize("value", [1.0, "3", False, -2])
    def test_non_negative_integer_rejects(self, value):
        with pytest.raises(ValidationError):
            validate_non_negative_integer(value)


class TestDomainValidators:
    def test_agent_id_range(self):
        assert validate_agent_id(999) == 999
        for value in (0, 1000):
            with pytest.raises(ValidationError, match=r"\[1, 999\]"):
                validate_agent_id(value)

    def test_agent_kind(self):
        assert validate_agent_kind("LargeUGV") == AgentKind.LARGE_UGV
        with pytest.raises(ValidationError, match="Valid kinds: LargeUGV, SmallUGV, UAV"):
            validate_agent_kind("Tank")

    def test_artefact_class(self):
        assert validate_artefact_class("gas") == "gas"
        with pytest.raises(ValidationError):
            validate_artefact_class("unicorn")

    def test_pose_forms(self):
        assert validate_pose([1, 2]) == Pose2(1.0, 2.0, 0.0)
        assert validate_pose([1, 2, 0.5]) == Pose2(1.0, 2.0, 0.5)
        assert validate_pose({"x": 1, "y": 2}) == Pose2(1.0, 2.0, 0.0)
        with pytest.raises(ValidationError):
            validate_pose([1])

    def test_point_and_box(self):
        assert validate_point([1, 2]) == (1.0, 2.0)
        assert validate_box([0, 0, 1, 2]) == (0.0, 0.0, 1.0, 2.0)
        with pytest.raises(ValidationError, match="positive extent"):
            validate_box([1, 0, 1, 2])

    def test_unique_and_choice(self):
        validate_unique([1, 2, 3], "agent id")
        with pytest.raises(ValidationError, match="duplicate agent id: 2"):
            validate_unique([1, 2, 2], "agent id")
        with pytest.raises(ValidationError, match="must be one of a, b"):
            validate_choice("c", ["a", "b"], "kind")


class TestMapLines:
    """Tests for ASCII map block validation"""

    def test_valid_block(self):
        lines = ["###", "#B#", "#r#", "#S#"]
        assert validate_map_lines(lines) == lines

    @pytest.mark.parametrize(
        "lines,message",
        [
            ([], "non-empty"),
            ("###", "non-empty"),
            (["###", 5], "must be strings"),
            ([""], "cannot be empty"),
            (["###", "##"], "row 1 has width 2, expected 3"),
            (["#?#"], "unknown map character '\\?' at row 0, column 1"),
        ],
    )
    def test_rejected_blocks(self, lines, message):
        with pytest.raises(ValidationError, match=message):
            validate_map_lines(lines)


class TestCapabilities:
    """Tests for platform capabilities"""

    def test_only_large_ugv_carries_and_drops(self):
        assert has_capability(AgentKind.LARGE_UGV, Capability.CARRY_UAV)
        assert has_capability("LargeUGV", Capability.DROP_COMMS_NODE)
        assert not has_capability(AgentKind.SMALL_UGV, Capability.DROP_COMMS_NODE)
        assert not has_capability(AgentKind.UAV, Capability.CARRY_UAV)

    def test_only_uav_flies(self):
        assert has_capability(AgentKind.UAV, Capability.CROSS_ROUGH)
        assert not has_capability(AgentKind.SMALL_UGV, Capability.FLY)

    def test_unknown_kind(self):
        assert not has_capability(None, Capability.EXPLORE)
        assert not has_capability("Boat", Capability.EXPLORE)

    def test_require_capability(self):
        require_capability(1, AgentKind.LARGE_UGV, Capability.DROP_COMMS_NODE)
        with pytest.raises(CapabilityError, match=r"Agent 2 \(UAV\) cannot 'drop_comms_node'"):
            require_capability(2, AgentKind.UAV, Capability.DROP_COMMS_NODE)
