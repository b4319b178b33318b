"""
Tests for the mission audit logger
"""

import json
import logging
from unittest.mock import patch

import pytest

from utils.mission_logger import MissionLogger, log_exception_with_context


@pytest.fixture
def audit():
    return MissionLogger()


class TestMissionLogger:
    """One JSON line per mission-critical action"""

    @patch("utils.mission_logger.sentry_sdk.add_breadcrumb")
    def test_task_event_line(self, mock_breadcrumb, audit, caplog):
        with caplog.at_level(logging.INFO, logger="mission_audit"):
            audit.log_task_event("task_claimed", 2, 12.34567, {"task": "1:4"})

        line = json.loads(caplog.records[0].getMessage())
        assert line == {
            "action": "task_claimed",
            "agent": 2,
            "entity": {"type": "task", "data": {"task": "1:4"}},
            "sim_time": 12.346,
        }
        assert mock_breadcrumb.call_args[1]["category"] == "mission.task"

    @patch("utils.mission_logger.sentry_sdk.add_breadcrumb")
    def test_blacklisting_is_a_warning(self, mock_breadcrumb, audit, caplog):
        with caplog.at_level(logging.INFO, logger="mission_audit"):
            audit.log_task_event("task_blacklisted", 2, 0.0, {"task": "1:4"})

        assert caplog.records[0].levelno == logging.WARNING

    @patch("utils.mission_logger.sentry_sdk.add_breadcrumb")
    def test_drop_node(self, mock_breadcrumb, audit, caplog):
        with caplog.at_level(logging.INFO, logger="mission_audit"):
            audit.log_drop_node(1, 30.0, 1000, (4.0, 5.0))

        line = json.loads(caplog.records[0].getMessage())
        assert line["entity"]["data"] == {"relay_id": 1000, "x": 4.0, "y": 5.0}

    @patch("utils.mission_logger.sentry_sdk.add_breadcrumb")
    def test_navigation_failure(self, mock_breadcrumb, audit, caplog):
        with caplog.at_level(logging.INFO, logger="mission_audit"):
            audit.log_navigation_failure(3, 1.0, (2.0, 2.0), "no path")

        assert caplog.records[0].levelno == logging.WARNING
        assert "no path" in caplog.records[0].getMessage()

    @patch("utils.mission_logger.sentry_sdk.capture_exception")
    def test_unexpected_exception_goes_to_sentry(self, mock_capture, audit):
        error = RuntimeError("boom")

        audit.log_unexpected_exception(error, {"service": "Mule"})

        mock_capture.assert_called_once_with(error)


class TestLogExceptionWithContext:
    @patch("utils.mission_logger.mission_logger")
    def test_reraises_with_context(self, mock_logger):
        @log_exception_with_context(service="Atlas", operation="refresh")
        def refresh(graph, force=False):
            raise KeyError("frame")

        with pytest.raises(KeyError):
            refresh("graph", force=True)

        error, context = mock_logger.log_unexpected_exception.call_args[0]
        assert isinstance(error, KeyError)
        assert context["service"] == "Atlas"
        assert context["args_count"] == 1
        assert context["kwargs_keys"] == ["force"]

    @patch("utils.mission_logger.mission_logger")
    def test_passes_results_through(self, mock_logger):
        @log_exception_with_context(service="Atlas")
        def ok():
            return 4

        assert ok() == 4
        mock_logger.log_unexpected_exception.assert_not_called()
