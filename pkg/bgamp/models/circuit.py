"""
Circuit graph records.

This module defines the node-and-element graph shared by the DC solver
and the small-signal oracle, and the named amplifier topologies built
on top of it.
"""

from enum import Enum
from typing import ClassVar, Iterable, Mapping

from pydantic import Field, model_validator

from bgamp.models.base import FrozenModel
from bgamp.models.device import DeviceParams, Polarity

GROUND = "0"


class DeviceBinding(FrozenModel):
    """One four-terminal device instance."""

    name: str = Field(min_length=1)
    drain: str
    gate: str
    source: str
    backgate: str
    params: DeviceParams

    @property
    def terminals(self) -> tuple[str, str, str, str]:
        return (self.drain, self.gate, self.source, self.backgate)


class VoltageSource(FrozenModel):
    """Ideal DC voltage source between two nodes."""

    name: str = Field(min_length=1)
    positive: str
    negative: str = GROUND
    dc: float = Field(allow_inf_nan=False)


class Conductance(FrozenModel):
    """Linear shunt conductance, used for load modelling."""

    name: str = Field(min_length=1)
    node_a: str
    node_b: str
    siemens: float = Field(ge=0.0, allow_inf_nan=False)


class Circuit(FrozenModel):
    """Devices, sources and shunt conductances connected by named nodes."""

    GROUND: ClassVar[str] = GROUND

    name: str = "circuit"
    devices: tuple[DeviceBinding, ...] = ()
    sources: tuple[VoltageSource, ...] = ()
    conductances: tuple[Conductance, ...] = ()

    @model_validator(mode="after")
    def _unique_names(self) -> "Circuit":
        names = [e.name.upper() for e in (*self.devices, *self.sources, *self.conductances)]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate element names: {', '.join(duplicates)}")
        return self

    @property
    def nodes(self) -> list[str]:
        """Non-ground nodes in order of first appearance."""
        seen: dict[str, None] = {}
        for d in self.devices:
            for node in d.terminals:
                seen.setdefault(node, None)
        for v in self.sources:
            seen.setdefault(v.positive, None)
            seen.setdefault(v.negative, None)
        for g in self.conductances:
            seen.setdefault(g.node_a, None)
            seen.setdefault(g.node_b, None)
        seen.pop(GROUND, None)
        return list(seen)

    def device(self, name: str) -> DeviceBinding:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    def source(self, name: str) -> VoltageSource:
        for v in self.sources:
            if v.name == name:
                return v
        raise KeyError(name)

    def source_driving(self, node: str) -> VoltageSource:
        """Grounded source whose positive terminal is ``node``."""
        for v in self.sources:
            if v.positive == node and v.negative == GROUND:
                return v
        raise KeyError(node)

    def with_sources(self, values: Mapping[str, float]) -> "Circuit":
        """Copy with the DC values of the named sources replaced."""
        unknown = set(values) - {v.name for v in self.sources}
        if unknown:
            raise KeyError(", ".join(sorted(unknown)))
        sources = tuple(
            v.model_copy(update={"dc": float(values[v.name])}) if v.name in values else v
            for v in self.sources
        )
        return self.model_copy(update={"sources": sources})

    def with_params(self, params: Mapping[str, DeviceParams]) -> "Circuit":
        """Copy with the cards of the named devices replaced."""
        devices = tuple(
            d.model_copy(update={"params": params[d.name]}) if d.name in params else d
            for d in self.devices
        )
        return self.model_copy(update={"devices": devices})

    def with_conductances(self, extra: Iterable[Conductance]) -> "Circuit":
        return self.model_copy(update={"conductances": (*self.conductances, *extra)})


class TopologyKind(str, Enum):
    """Amplifier topologies."""

    CCS_OL = "ccs_ol"
    CCS_BG = "ccs_bg"
    DIFF_SCMFB = "diff_scmfb"
    DIFF_DCMFB = "diff_dcmfb"

    @property
    def differential(self) -> bool:
        return self in (TopologyKind.DIFF_SCMFB, TopologyKind.DIFF_DCMFB)


class Supplies(FrozenModel):
    """Supply rails."""

    vdd: float = Field(default=1.8, gt=0.0, allow_inf_nan=False)
    vss: float = Field(default=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _ordered(self) -> "Supplies":
        if not self.vss < self.vdd:
            raise ValueError("vss must be below vdd")
        return self


class Topology(Circuit):
    """
    A named amplifier built from default wiring.

    ``cmfb_ref`` is the input common-mode bias (the DC input voltage for
    CCS kinds). ``feedback`` tells whether the input devices' back gates
    are tied to their outputs.
    """

    DEVICE_COUNTS: ClassVar[dict[TopologyKind, int]] = {
        TopologyKind.CCS_OL: 2,
        TopologyKind.CCS_BG: 2,
        TopologyKind.DIFF_SCMFB: 6,
        TopologyKind.DIFF_DCMFB: 8,
    }

    kind: TopologyKind
    supplies: Supplies = Supplies()
    cmfb_ref: float = Field(allow_inf_nan=False)
    feedback: bool = True

    @model_validator(mode="after")
    def _device_count(self) -> "Topology":
        expected = self.DEVICE_COUNTS[self.kind]
        if len(self.devices) != expected:
            raise ValueError(f"{self.kind.value} binds {expected} devices, got {len(self.devices)}")
        return self

    @property
    def input_nodes(self) -> tuple[str, ...]:
        return ("inp", "inn") if self.kind.differential else ("in",)

    @property
    def output_nodes(self) -> tuple[str, ...]:
        return ("outp", "outn") if self.kind.differential else ("out",)

    def with_length(self, length: float) -> "Topology":
        """Copy with every device's channel length set to ``length`` (um)."""
        return self.with_params(
            {d.name: d.params.with_geometry(length=length) for d in self.devices}
        )  # type: ignore[return-value]

    def scale_widths(self, names: Iterable[str], factor: float) -> "Topology":
        """Copy with the widths of the named devices multiplied by ``factor``."""
        return self.with_params(
            {
                name: self.device(name).params.with_geometry(width=self.device(name).params.width * factor)
                for name in names
            }
        )  # type: ignore[return-value]

    def with_cards(
        self,
        n_params: DeviceParams | None = None,
        p_params: DeviceParams | None = None,
    ) -> "Topology":
        """Copy with every device of a polarity on a new card, keeping each device's geometry."""
        cards = {Polarity.N: n_params, Polarity.P: p_params}
        updates = {}
        for d in self.devices:
            card = cards[d.params.polarity]
            if card is None:
                continue
            if card.polarity is not d.params.polarity:
                raise ValueError(f"{d.name} needs a {d.params.polarity.name}-type card")
            updates[d.name] = card.with_geometry(width=d.params.width, length=d.params.length)
        return self.with_params(updates)  # type: ignore[return-value]
