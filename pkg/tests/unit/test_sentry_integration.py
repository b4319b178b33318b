"""
Tests to verify Sentry integration
"""

import pytest
from unittest.mock import patch, Mock
from utils.sentry_config import (
    capture_exceptions,
    filter_bulky_data,
    init_sentry,
    log_run_start,
    log_run_summary,
    log_unexpected_error,
)


class TestSentryConfiguration:
    """Sentry configuration tests"""

    @patch("utils.sentry_config.os.getenv")
    @patch("utils.sentry_config.sentry_sdk.init")
    def test_init_sentry_with_dsn(self, mock_init, mock_getenv):
        """Test Sentry initialization with DSN"""
        mock_getenv.side_effect = lambda key, default=None: {
            "SENTRY_DSN": "https://test@sentry.io/123",
            "ENVIRONMENT": "test",
            "APP_VERSION": "2.1.0",
        }.get(key, default)

        init_sentry()

        mock_init.assert_called_once()
        call_args = mock_init.call_args[1]
        assert call_args["dsn"] == "https://test@sentry.io/123"
        assert call_args["environment"] == "test"
        assert call_args["send_default_pii"] is False
        assert call_args["release"] == "2.1.0"
        assert call_args["before_send"] is filter_bulky_data

    @patch("utils.sentry_config.os.getenv")
    @patch("utils.sentry_config.logger")
    def test_init_sentry_without_dsn(self, mock_logger, mock_getenv):
        """Test initialization without DSN (dev mode)"""
        mock_getenv.return_value = None

        init_sentry()

        mock_logger.warning.assert_called_once_with(
            "SENTRY_DSN not found in environment variables. Sentry monitoring disabled."
        )

    @patch("utils.sentry_config.os.getenv")
    @patch("utils.sentry_config.sentry_sdk.init", side_effect=RuntimeError("bad dsn"))
    @patch("utils.sentry_config.logger")
    def test_init_failure_is_logged(self, mock_logger, mock_init, mock_getenv):
        mock_getenv.side_effect = lambda key, default=None: "x" if key == "SENTRY_DSN" else default

        init_sentry()

        mock_logger.error.assert_called_once_with("Failed to initialize Sentry: bad dsn")

    def test_filter_long_byte_strings(self):
        """Test that wire payloads quoted in messages are truncated"""
        event = {"message": "decode failed for b'" + "\\x00" * 40 + "'"}

        filtered_event = filter_bulky_data(event, None)

        assert filtered_event["message"] == "decode failed for b'***TRUNCATED***'"

    def test_short_messages_untouched(self):
        event = {"message": "decode failed for b'abc'"}
        assert filter_bulky_data(event, None)["message"] == "decode failed for b'abc'"

    def test_filter_bulky_vars(self):
        """Test filtering of bulky local variables"""
        event = {
            "exception": {
                "values": [
                    {
                        "stacktrace": {
                            "frames": [
                                {
                                    "vars": {
                                        "payload": "b'...'",
                                        "Points": "[[0.0, 1.0], ...]",
                                        "topic": "frames",
                                    }
                                }
                            ]
                        }
                    }
                ]
            }
        }

        filtered_event = filter_bulky_data(event, None)

        frame_vars = filtered_event["exception"]["values"][0]["stacktrace"]["frames"][0]["vars"]
        assert frame_vars["payload"] == "***TRUNCATED***"
        assert frame_vars["Points"] == "***TRUNCATED***"
        assert frame_vars["topic"] == "frames"


class TestSentryLogging:
    """Tests for run-level logging functions"""

    @patch("utils.sentry_config.sentry_sdk.add_breadcrumb")
    @patch("utils.sentry_config.logger")
    def test_log_run_start(self, mock_logger, mock_breadcrumb):
        log_run_start("corridor", 7, 600.0)

        mock_breadcrumb.assert_called_once_with(
            message="Run started: corridor",
            category="run.start",
            data={"scenario": "corridor", "seed": 7, "duration": 600.0},
            level="info",
        )
        mock_logger.info.assert_called_once()

    @patch("utils.sentry_config.sentry_sdk.add_breadcrumb")
    @patch("utils.sentry_config.logger")
    def test_log_run_summary(self, mock_logger, mock_breadcrumb):
        summary = {"artefacts_correct": 3, "artefacts_total": 5, "reports_scored": 4, "coverage": 0.5}

        log_run_summary("maze", summary)

        assert mock_breadcrumb.call_args[1]["data"] == {"correct": 3, "reports": 4}
        message = mock_logger.info.call_args[0][0]
        assert "Artefacts: 3/5" in message
        assert "Coverage: 0.500" in message

    @patch("utils.sentry_config.sentry_sdk.set_context")
    @patch("utils.sentry_config.sentry_sdk.capture_exception")
    @patch("utils.sentry_config.logger")
    def test_log_unexpected_error(self, mock_logger, mock_capture, mock_context):
        """Test unexpected error logging"""
        error = ValueError("Test error")

        log_unexpected_error(error, {"command": "run"})

        mock_context.assert_called_once_with("error_context", {"command": "run"})
        mock_capture.assert_called_once_with(error)
        mock_logger.error.assert_called_once()


class TestCaptureExceptionsDecorator:
    """Tests for the capture_exceptions decorator"""

    def test_capture_exceptions_decorator_success(self):
        """Test that decorator doesn't interfere with normal functions"""

        @capture_exceptions
        def add(x, y):
            return x + y

        assert add(2, 3) == 5

    @patch("utils.sentry_config.log_unexpected_error")
    def test_capture_exceptions_decorator_with_error(self, mock_log_error):
        """Test that decorator captures errors and re-raises them"""

        @capture_exceptions
        def broken():
            raise ValueError("Test error")

        with pytest.raises(ValueError):
            broken()

        mock_log_error.assert_called_once()
        args = mock_log_error.call_args[0]
        assert isinstance(args[0], ValueError)
        assert args[1]["function"] == "broken"


class TestSentryIntegration:
    """Sentry integration tests"""

    @patch("utils.sentry_config.sentry_sdk")
    def test_breadcrumb_integration(self, mock_sentry_sdk):
        """Test breadcrumb integration"""
        mock_sentry_sdk.add_breadcrumb = Mock()

        log_run_start("empty", 0, 60.0)

        mock_sentry_sdk.add_breadcrumb.assert_called_once()
        call_args = mock_sentry_sdk.add_breadcrumb.call_args[1]

        assert call_args["category"] == "run.start"
        assert call_args["level"] == "info"
        assert "empty" in call_args["message"]
