"""Tests for logging setup and the CLI's use of it."""

import logging
from io import StringIO

from click.testing import CliRunner

from active_manip.main import NOISY_LOGGERS, cli, setup_logging


class TestLoggingSetup:
    """Test cases for the logging setup functionality."""

    def test_setup_logging_default_warning_level(self):
        """Test that default logging level is WARNING."""
        # Arrange & Act
        setup_logging(verbose=False)

        # Assert
        assert logging.getLogger().level == logging.WARNING

    def test_setup_logging_verbose_debug_level(self):
        """Test that verbose mode sets DEBUG level."""
        # Arrange & Act
        setup_logging(verbose=True)

        # Assert
        assert logging.getLogger().level == logging.DEBUG

    def test_third_party_loggers_stay_quiet_when_verbose(self):
        # Act
        setup_logging(verbose=True)

        # Assert
        for name in NOISY_LOGGERS:
            assert logging.getLogger(name).level == logging.WARNING

    def test_noisy_loggers_are_runtime_dependencies(self):
        assert NOISY_LOGGERS == ("torch", "diffusers")

    def test_setup_logging_format(self):
        """Records carry logger name, level and function name."""
        # Arrange
        setup_logging(verbose=True)
        log_stream = StringIO()
        handler = logging.StreamHandler(log_stream)
        handler.setFormatter(logging.getLogger().handlers[0].formatter)
        test_logger = logging.getLogger("test_logger")
        test_logger.addHandler(handler)

        # Act
        test_logger.info("Test message")

        # Assert
        log_output = log_stream.getvalue()
        assert "test_logger - INFO - test_setup_logging_format - Test message" in log_output
        test_logger.removeHandler(handler)

    def test_debug_messages_only_in_verbose(self):
        # Arrange
        log_stream = StringIO()
        setup_logging(verbose=False)
        test_logger = logging.getLogger("test_debug")
        handler = logging.StreamHandler(log_stream)
        test_logger.addHandler(handler)

        # Act
        test_logger.debug("Debug message")

        # Assert
        assert "Debug message" not in log_stream.getvalue()
        test_logger.removeHandler(handler)


class TestCLILogging:
    """The group callback configures logging from its flags."""

    def setup_method(self):
        self.runner = CliRunner()

    def test_cli_help_shows_verbose_option(self):
        result = self.runner.invoke(cli, ["--help"])

        assert result.exit_code == 0
        assert "-v, --verbose" in result.output

    def test_cli_calls_setup_logging_verbose_true(self, mocker):
        # Arrange
        mock_setup_logging = mocker.patch("active_manip.main.setup_logging")

        # Act
        self.runner.invoke(cli, ["--verbose", "components"], catch_exceptions=False)

        # Assert
        mock_setup_logging.assert_called_with(verbose=True)

    def test_cli_calls_setup_logging_verbose_false(self, mocker):
        # Arrange
        mock_setup_logging = mocker.patch("active_manip.main.setup_logging")

        # Act
        self.runner.invoke(cli, ["components"], catch_exceptions=False)

        # Assert
        mock_setup_logging.assert_called_with(verbose=False)

    def test_thread_hint_is_applied(self, mocker, monkeypatch):
        monkeypatch.setenv("ACTIVE_MANIP_THREADS", "2")
        set_threads = mocker.patch("active_manip.main.torch.set_num_threads")

        result = self.runner.invoke(cli, ["components"])

        assert result.exit_code == 0
        set_threads.assert_called_once_with(2)
