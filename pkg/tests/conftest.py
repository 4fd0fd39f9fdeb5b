"""
Pytest configuration and fixtures.

This module provides shared fixtures and configuration for all tests.
"""

import itertools
from typing import Collection, Generator

import pytest
from loguru import logger
from typer.testing import CliRunner

from bgamp.analysis import mismatch
from bgamp.analysis.circuits import build_topology, default_topology
from bgamp.analysis.dcsolve import solve_op
from bgamp.analysis.device import default_nmos, default_pmos
from bgamp.analysis.smallsig import derivative_sets
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import ConvergenceError
from bgamp.models.circuit import Topology, TopologyKind
from bgamp.models.device import DerivativeSet, DeviceParams, Polarity


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch) -> Generator[None, None, None]:
    """Isolate every test from BGAMP_* variables and the settings cache."""
    import os

    for name in list(os.environ):
        if name.startswith("BGAMP_"):
            monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(os.path.dirname(__file__))
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    # CLI runs attach sinks to streams that close with the runner
    logger.remove()
    logger.disable("bgamp")


@pytest.fixture
def settings() -> Settings:
    """Default settings."""
    return Settings()


@pytest.fixture
def nmos() -> DeviceParams:
    """Default N card (L = 0.15 um)."""
    return default_nmos()


@pytest.fixture
def pmos() -> DeviceParams:
    """Default P card, the mirror of the N card."""
    return default_pmos()


@pytest.fixture
def ccs_ol() -> Topology:
    """Open-loop complementary common-source stage."""
    return default_topology(TopologyKind.CCS_OL)


@pytest.fixture
def ccs_bg() -> Topology:
    """Back-gate feedback complementary common-source stage."""
    return default_topology(TopologyKind.CCS_BG)


@pytest.fixture
def scmfb() -> Topology:
    """Differential stage with single CMFB at L = 1 um."""
    return default_topology(TopologyKind.DIFF_SCMFB, length=1.0)


@pytest.fixture
def dcmfb() -> Topology:
    """Differential stage with dual CMFB at L = 1 um."""
    return default_topology(TopologyKind.DIFF_DCMFB, length=1.0)


@pytest.fixture
def ccs_dsets(ccs_ol) -> dict[str, DerivativeSet]:
    """Third-order derivative sets of the open-loop CCS at its operating point."""
    op = solve_op(ccs_ol)
    return derivative_sets(ccs_ol, op)


@pytest.fixture
def runner() -> CliRunner:
    """CLI test runner."""
    return CliRunner()


def first_order(polarity: Polarity, gm: float, gds: float, gmb: float = 0.0) -> DerivativeSet:
    """Hand-built first-order derivative set."""
    return DerivativeSet(
        polarity=polarity, order=1, gm=(gm, 0.0, 0.0), gds=(gds, 0.0, 0.0), gmb=(gmb, 0.0, 0.0)
    )


def topology_with(kind: TopologyKind, **card: float) -> Topology:
    """Topology whose N and P cards share the given overrides."""
    n_card, p_card = default_nmos(**card), default_pmos(**card)
    return build_topology(kind, n_card, p_card, cmfb_n=n_card, cmfb_p=p_card)


def fail_samples(monkeypatch, failures: Collection[int], value: float = 40.0) -> None:
    """Make Monte Carlo CMRR evaluations fail on the given call indices and return ``value`` otherwise."""
    calls = itertools.count()

    def evaluate(topology, settings=None, initial_guess=None) -> float:
        if next(calls) in failures:
            raise ConvergenceError("No DC solution", node="outp", residual=1e-6)
        return value

    monkeypatch.setattr(mismatch, "cmrr_db", evaluate)
