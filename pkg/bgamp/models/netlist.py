"""
Netlist records.

Parsed netlists keep each card with its 1-based source position. The
positions are excluded from ``structure()`` so two netlists compare
equal when they describe the same circuit.
"""

from typing import Any, Literal

from pydantic import Field

from bgamp.models.base import FrozenModel
from bgamp.models.circuit import Circuit, DeviceBinding, VoltageSource
from bgamp.models.device import DeviceParams

METERS_TO_UM = 1e6


class Positioned(FrozenModel):
    line: int = Field(default=0, ge=0, exclude=True)
    column: int = Field(default=0, ge=0, exclude=True)


class ModelCard(Positioned):
    """A ``.model`` card: name plus device parameters (geometry placeholder)."""

    name: str
    params: DeviceParams


class DeviceCard(Positioned):
    """An ``M`` card; geometry in metres as written."""

    name: str
    drain: str
    gate: str
    source: str
    backgate: str
    model: str
    width_m: float = Field(gt=0.0)
    length_m: float = Field(gt=0.0)
    model_column: int = Field(default=0, ge=0, exclude=True)


class SourceCard(Positioned):
    """A ``V`` card."""

    name: str
    positive: str
    negative: str
    dc: float


class Directive(Positioned):
    """``.op`` or ``.dc <source> <start> <stop> <points>``."""

    kind: Literal["op", "dc"]
    source: str | None = None
    start: float | None = None
    stop: float | None = None
    points: int | None = None


class Netlist(FrozenModel):
    """A parsed netlist."""

    models: tuple[ModelCard, ...] = ()
    devices: tuple[DeviceCard, ...] = ()
    sources: tuple[SourceCard, ...] = ()
    directives: tuple[Directive, ...] = ()
    warnings: tuple[str, ...] = Field(default=(), exclude=True)

    def structure(self) -> dict[str, Any]:
        """Position-free content used for equality checks."""
        return self.model_dump(mode="json")

    def model_card(self, name: str) -> ModelCard:
        key = name.lower()
        for card in self.models:
            if card.name == key:
                return card
        raise KeyError(name)

    def to_circuit(self, name: str = "netlist") -> Circuit:
        """Resolve model references and convert geometry to micrometres."""
        devices = tuple(
            DeviceBinding(
                name=d.name,
                drain=d.drain,
                gate=d.gate,
                source=d.source,
                backgate=d.backgate,
                params=self.model_card(d.model).params.with_geometry(
                    width=d.width_m * METERS_TO_UM, length=d.length_m * METERS_TO_UM
                ),
            )
            for d in self.devices
        )
        sources = tuple(
            VoltageSource(name=v.name, positive=v.positive, negative=v.negative, dc=v.dc)
            for v in self.sources
        )
        return Circuit(name=name, devices=devices, sources=sources)
