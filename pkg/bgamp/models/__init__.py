"""Frozen records for devices, circuits, netlists and analysis results."""

from bgamp.models.analysis import (
    BiasMatch,
    CombinedConductances,
    CrossTerms,
    OperatingPoint,
    PowerSeries,
    SeriesMode,
    TransferCurve,
)
from bgamp.models.base import FrozenModel
from bgamp.models.circuit import (
    Circuit,
    Conductance,
    DeviceBinding,
    Supplies,
    Topology,
    TopologyKind,
    VoltageSource,
)
from bgamp.models.device import BiasTuple, DerivativeSet, DeviceParams, Polarity
from bgamp.models.netlist import Netlist

__all__ = [
    "FrozenModel",
    "Polarity",
    "DeviceParams",
    "BiasTuple",
    "DerivativeSet",
    "Circuit",
    "Conductance",
    "DeviceBinding",
    "VoltageSource",
    "Supplies",
    "Topology",
    "TopologyKind",
    "Netlist",
    "OperatingPoint",
    "TransferCurve",
    "SeriesMode",
    "CrossTerms",
    "PowerSeries",
    "CombinedConductances",
    "BiasMatch",
]
