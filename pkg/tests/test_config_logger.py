import json
import logging

from ldpbd.config import Settings, settings
from ldpbd.exceptions import NonConstantRowSum, RowLimitExceeded
from ldpbd.logger import JSONFormatter, SimpleFormatter, setup_logger


def make_record(**extra):
    record = logging.LogRecord("ldpbd", logging.INFO, __file__, 10, "构造机制", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_settings_defaults():
    settings = Settings()
    assert settings.row_limit == 1_000_000
    assert settings.cluster_tol == 1e-9
    assert settings.singular_cond_limit == 1e12


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("LDPBD_ROW_LIMIT", "5")
    monkeypatch.setenv("LDPBD_LOG_FORMAT", "simple")
    settings = Settings()
    assert settings.row_limit == 5
    assert settings.log_format == "simple"


def test_json_formatter_context():
    entry = json.loads(JSONFormatter().format(make_record(design="fano", trial=3)))
    assert entry["message"] == "构造机制"
    assert entry["level"] == "INFO"
    assert entry["design"] == "fano"
    assert entry["trial"] == 3
    assert "command" not in entry


def test_simple_formatter_context():
    line = SimpleFormatter().format(make_record(command="verify"))
    assert "INFO" in line
    assert line.endswith("构造机制 [command=verify]")


def test_setup_logger_level():
    logger = setup_logger(level="debug", log_format="simple")
    try:
        assert logger.level == logging.DEBUG
        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0].formatter, SimpleFormatter)
        assert not logger.propagate
    finally:
        setup_logger()


def test_setup_logger_debug_setting(monkeypatch):
    monkeypatch.setattr(settings, "debug", True)
    try:
        assert setup_logger().level == logging.DEBUG
        assert setup_logger(level="warning").level == logging.WARNING
    finally:
        monkeypatch.undo()
        setup_logger()


def test_error_response():
    response = NonConstantRowSum(1, 2, 1).to_response()
    assert response.error == "NonConstantRowSum"
    assert NonConstantRowSum(1, 2, 1).exit_code == 1
    assert RowLimitExceeded(35, 10).to_response().detail is not None
