"""
Mission audit logging
Centralized logging for mission-critical actions (task awards, drop-node
deployment, UAV launch, artefact reports, navigation failures, map merges)
"""

import json
import logging
from functools import wraps
from typing import Any, Dict, Optional

import sentry_sdk


class MissionLogger:
    """Structured logger for all mission-critical actions of a run"""

    def __init__(self):
        self.logger = logging.getLogger("mission_audit")

    def _format_log_data(
        self,
        action: str,
        agent_id: int,
        sim_time: float,
        entity_type: str,
        entity_data: Dict[str, Any],
        additional_info: Optional[Dict[str, Any]] = None,
    ) -> str:
        """Format log data in a structured way"""
        log_data = {
            "sim_time": round(sim_time, 3),
            "action": action,
            "agent": agent_id,
            "entity": {"type": entity_type, "data": entity_data},
        }

        if additional_info:
            log_data["additional_info"] = additional_info

        return json.dumps(log_data, sort_keys=True, default=str)

    def _emit(
        self,
        action: str,
        agent_id: int,
        sim_time: float,
        entity_type: str,
        entity_data: Dict[str, Any],
        level: str = "info",
        additional_info: Optional[Dict[str, Any]] = None,
    ) -> None:
        line = self._format_log_data(
            action, agent_id, sim_time, entity_type, entity_data, additional_info
        )
        sentry_sdk.add_breadcrumb(
            message=f"{action} by agent {agent_id}",
            category=f"mission.{entity_type}",
            data=entity_data,
            level=level,
        )
        if level == "warning":
            self.logger.warning(line)
        else:
            self.logger.info(line)

    def log_task_event(
        self, action: str, agent_id: int, sim_time: float, task_data: Dict[str, Any]
    ) -> None:
        """Log a task award, release, completion or blacklisting"""
        level = "warning" if action == "task_blacklisted" else "info"
        self._emit(action, agent_id, sim_time, "task", task_data, level=level)

    def log_drop_node(
        self, agent_id: int, sim_time: float, relay_id: int, position: tuple
    ) -> None:
        """Log a communication node deployment"""
        self._emit(
            "drop_node_deployed",
            agent_id,
            sim_time,
            "relay",
            {"relay_id": relay_id, "x": position[0], "y": position[1]},
        )

    def log_uav_launch(self, agent_id: int, sim_time: float, uav_id: int) -> None:
        """Log a marsupial launch"""
        self._emit("uav_launched", agent_id, sim_time, "agent", {"uav_id": uav_id})

    def log_report_sent(
        self, agent_id: int, sim_time: float, report_data: Dict[str, Any]
    ) -> None:
        """Log an artefact report published to the operator"""
        self._emit("artefact_reported", agent_id, sim_time, "report", report_data)

    def log_navigation_failure(
        self, agent_id: int, sim_time: float, target: Any, reason: str
    ) -> None:
        """Log a navigation failure - feeds task blacklisting"""
        self._emit(
            "navigation_failed",
            agent_id,
            sim_time,
            "navigation",
            {"target": target, "reason": reason},
            level="warning",
        )

    def log_hypothesis_accepted(
        self, agent_id: int, sim_time: float, hypothesis_data: Dict[str, Any]
    ) -> None:
        """Log a map merge or loop closure accepted by an agent's atlas"""
        self._emit("hypothesis_accepted", agent_id, sim_time, "atlas", hypothesis_data)

    def log_unexpected_exception(
        self, exception: Exception, context: Dict[str, Any]
    ) -> None:
        """Log all unexpected exceptions - SENTRY ONLY"""
        with sentry_sdk.new_scope() as scope:
            scope.set_tag("exception_type", type(exception).__name__)
            scope.set_tag("service", context.get("service", "unknown"))
            scope.set_tag("operation", context.get("operation", "unknown"))

            scope.set_context(
                "error_details",
                {
                    "exception_type": type(exception).__name__,
                    "exception_message": str(exception),
                },
            )
            scope.set_context("execution_context", context)

            sentry_sdk.capture_exception(exception)


# Global logger instance
mission_logger = MissionLogger()


def log_exception_with_context(**context_data):
    """
    Decorator to capture all exceptions with context

    Usage:
    @log_exception_with_context(service="MuleService", operation="publish")
    def publish(self, topic, payload):
        ...
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                full_context = {
                    "function": f"{func.__module__}.{func.__name__}",
                    "args_count": len(args),
                    "kwargs_keys": list(kwargs.keys()),
                    **context_data,
                }

                mission_logger.log_unexpected_exception(e, full_context)
                raise

        return wrapper

    return decorator
