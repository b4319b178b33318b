"""
Scenario data validation module
Validations for numbers, poses, map blocks and agent declarations
"""

import math
from typing import Any, Iterable, List, Sequence

from models.geometry import Pose2
from models.world import ARTEFACT_CLASSES, AgentKind


class ValidationError(Exception):
    """Exception raised during validation errors"""


def validate_positive_number(value: Any, field_name: str = "value") -> float:
    """
    Validates that a value is a finite number strictly greater than zero

    Args:
        value: The value to validate
        field_name: Field name for error message

    Returns:
        The value as float

    Raises:
        ValidationError: If the value is not a positive number
    """
    number = validate_number(value, field_name)
    if number <= 0:
        raise ValidationError(f"{field_name} must be positive (received: {value})")
    return number


def validate_non_negative(value: Any, field_name: str = "value") -> float:
    """Validates that a value is a finite number >= 0"""
    number = validate_number(value, field_name)
    if number < 0:
        raise ValidationError(f"{field_name} cannot be negative (received: {value})")
    return number


def validate_number(value: Any, field_name: str = "value") -> float:
    """Validates that a value is a finite real number"""
    if isinstance(value, bool):
        raise ValidationError(f"{field_name} must be a number (received: {value})")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{field_name} must be a number (received: {value})")
    if not math.isfinite(number):
        raise ValidationError(f"{field_name} must be finite (received: {value})")
    return number


def validate_non_negative_integer(value: Any, field_name: str = "value") -> int:
    """
    Validates a non-negative integer (bools rejected)

    Raises:
        ValidationError: If the value is not an integer >= 0
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{field_name} must be an integer (received: {value})")
    if value < 0:
        raise ValidationError(f"{field_name} cannot be negative (received: {value})")
    return value


def validate_agent_id(value: Any) -> int:
    """Agent ids live in [1, 999]; 0 is the base station and relays start at 1000"""
    agent_id = validate_non_negative_integer(value, "agent id")
    if not 1 <= agent_id <= 999:
        raise ValidationError(f"agent id must be within [1, 999] (received: {value})")
    return agent_id


def validate_agent_kind(value: Any) -> AgentKind:
    """Validates a platform name"""
    try:
        return AgentKind(value)
    except ValueError:
        valid = ", ".join(kind.value for kind in AgentKind)
        raise ValidationError(f"Unknown agent kind '{value}'. Valid kinds: {valid}")


def validate_artefact_class(value: Any) -> str:
    """Validates an artefact class label"""
    if value not in ARTEFACT_CLASSES:
        raise ValidationError(
            f"Unknown artefact class '{value}'. Valid classes: {', '.join(ARTEFACT_CLASSES)}"
        )
    return value


def validate_pose(value: Any, field_name: str = "pose") -> Pose2:
    """
    Validates a pose given as [x, y] or [x, y, theta_radians]

    Returns:
        The pose

    Raises:
        ValidationError: If the value is malformed
    """
    if isinstance(value, dict):
        value = [value.get("x"), value.get("y"), value.get("theta", 0.0)]
    if not isinstance(value, (list, tuple)) or len(value) not in (2, 3):
        raise ValidationError(f"{field_name} must be [x, y] or [x, y, theta]")
    numbers = [validate_number(v, field_name) for v in value]
    if len(numbers) == 2:
        numbers.append(0.0)
    return Pose2(*numbers)


def validate_point(value: Any, field_name: str = "point") -> tuple:
    """Validates an [x, y] pair"""
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError(f"{field_name} must be [x, y]")
    return (validate_number(value[0], field_name), validate_number(value[1], field_name))


def validate_box(value: Any, field_name: str = "box") -> tuple:
    """Validates an axis-aligned box [x_min, y_min, x_max, y_max]"""
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError(f"{field_name} must be [x_min, y_min, x_max, y_max]")
    x0, y0, x1, y1 = (validate_number(v, field_name) for v in value)
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"{field_name} must have positive extent")
    return (x0, y0, x1, y1)


def validate_map_lines(lines: Any) -> List[str]:
    """
    Validates an ASCII map block: non-empty, rectangular, known characters

    Raises:
        ValidationError: If the block is malformed
    """
    if not isinstance(lines, list) or not lines:
        raise ValidationError("map must be a non-empty list of strings")
    if not all(isinstance(line, str) for line in lines):
        raise ValidationError("map rows must be strings")
    width = len(lines[0])
    if width == 0:
        raise ValidationError("map rows cannot be empty")
    for index, line in enumerate(lines):
        if len(line) != width:
            raise ValidationError(
                f"map row {index} has width {len(line)}, expected {width}"
            )
        for column, char in enumerate(line):
            if char not in "#.r" and not ("A" <= char <= "Z"):
                raise ValidationError(
                    f"unknown map character '{char}' at row {index}, column {column}"
                )
    return lines


def validate_unique(values: Iterable[Any], field_name: str) -> None:
    """Validates that no value appears twice"""
    seen = set()
    for value in values:
        if value in seen:
            raise ValidationError(f"duplicate {field_name}: {value}")
        seen.add(value)


def validate_choice(value: Any, choices: Sequence[str], field_name: str) -> str:
    """Validates a string against a closed set"""
    if value not in choices:
        raise ValidationError(
            f"{field_name} must be one of {', '.join(choices)} (received: {value})"
        )
    return value

