"""
Tests for settings, CSV export, exit-code mapping and logging setup.
"""

import io
import math

import pytest
from loguru import logger
from pydantic import ValidationError

from bgamp.core.config import Settings, get_settings, thermal_voltage
from bgamp.core.exceptions import (
    EXIT_ANALYSIS,
    EXIT_USAGE,
    ConvergenceError,
    DomainError,
    IdealLimitError,
    NetlistSyntaxError,
    handle_exception,
)
from bgamp.core.export import ERROR_MARKER, format_cell, write_table
from bgamp.core.logging import get_analysis_logger, setup_logging


def test_settings_defaults(settings):
    """Test the defaults that analyses rely on."""
    assert settings.SEED == 0
    assert settings.LOG_LEVEL == "WARNING"
    assert settings.FIT_POINTS == 201
    assert settings.KCL_ABSTOL_A == 1e-12
    assert settings.thermal_voltage_v == pytest.approx(0.025852, rel=1e-4)
    assert thermal_voltage(300.0) == settings.thermal_voltage_v


def test_settings_from_environment(monkeypatch):
    """Test BGAMP_* overrides and the settings cache."""
    monkeypatch.setenv("BGAMP_SEED", "42")
    monkeypatch.setenv("BGAMP_TEMPERATURE_K", "350")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.SEED == 42
    assert settings.TEMPERATURE_K == 350.0
    assert get_settings() is settings


@pytest.mark.parametrize(
    "field, value",
    [
        ("VNTOL_V", 0.0),
        ("FIT_AMPLITUDE_V", -1e-3),
        ("MC_MAX_FAILURE_FRACTION", 1.5),
        ("FIT_POINTS", 10),
        ("FIT_ORDER", 6),
        ("SEED", -1),
        ("LOG_LEVEL", "LOUD"),
    ],
)
def test_settings_validation(field, value):
    """Test that out-of-range settings are rejected."""
    with pytest.raises(ValidationError):
        Settings(**{field: value})


def test_format_cell():
    """Test number, missing and flag formatting."""
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(7) == "7"
    assert format_cell(-5.0) == "-5.00000000000e+00"
    assert format_cell(math.inf) == "inf"
    assert format_cell(-math.inf) == "-inf"
    assert format_cell(math.nan) == "nan"
    assert format_cell("ccs_bg") == "ccs_bg"


def test_write_table_to_stream():
    """Test header, rows and the trailing error marker."""
    buffer = io.StringIO()
    count = write_table(("a", "b"), [(1, 0.5), ("x", None)], buffer, error="solver failed")
    assert count == 2
    assert buffer.getvalue().splitlines() == [
        "a,b",
        "1,5.00000000000e-01",
        "x,",
        f"{ERROR_MARKER} solver failed",
    ]


def test_write_table_to_file(tmp_path):
    """Test file output and the row width check."""
    target = tmp_path / "table.csv"
    write_table(("a",), [(1.0,)], target)
    assert target.read_text(encoding="utf-8") == "a\n1.00000000000e+00\n"
    with pytest.raises(ValueError):
        write_table(("a", "b"), [(1.0,)], io.StringIO())


def test_exit_codes():
    """Test the exception to exit-code mapping."""
    assert handle_exception(DomainError("bad input")) == EXIT_ANALYSIS
    assert handle_exception(IdealLimitError("gain")) == EXIT_ANALYSIS
    assert handle_exception(NetlistSyntaxError("unexpected token", 3, 7)) == EXIT_USAGE
    assert handle_exception(RuntimeError("boom")) == EXIT_ANALYSIS


def test_error_details():
    """Test the messages and context the errors carry."""
    netlist = NetlistSyntaxError("unexpected token", 3, 7, expected=["<node>"])
    assert netlist.message == "line 3, column 7: unexpected token"
    assert (netlist.line, netlist.column, netlist.expected) == (3, 7, frozenset({"<node>"}))
    convergence = ConvergenceError(node="out", residual=1e-6)
    assert convergence.details == {"node": "out", "residual": 1e-6}
    assert IdealLimitError("IP3").limit == math.inf


def test_setup_logging_writes_files(tmp_path, monkeypatch):
    """Test the rotating file sinks under LOG_DIR."""
    monkeypatch.setenv("BGAMP_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("BGAMP_LOG_LEVEL", "INFO")
    get_settings.cache_clear()
    setup_logging()
    get_analysis_logger("dcsolve").warning("source stepping engaged")
    logger.complete()
    assert "source stepping engaged" in (tmp_path / "logs" / "bgamp.log").read_text()
    assert "source stepping engaged" in (tmp_path / "logs" / "warnings.log").read_text()
