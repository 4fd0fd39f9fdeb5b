"""
Run configuration schema.

This module defines the request model every CLI command is turned into
before ``bgamp.cli.run`` executes it.
"""

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class Command(str, Enum):
    """Analysis commands."""

    OP = "op"
    SWEEP = "sweep"
    GAIN = "gain"
    NOISE = "noise"
    DIST = "dist"
    CMRR = "cmrr"
    MC = "mc"


class SweepAxis(BaseModel):
    """DC sweep request; a comma in a node name selects a differential pair."""

    input: Optional[str] = Field(default=None, description="Source, node, or 'p,n' pair")
    output: Optional[str] = Field(default=None, description="Node or 'p,n' pair")
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(default=None, ge=2, description="Samples; .dc directive or 181 when unset")


class RunConfig(BaseModel):
    """One analysis run."""

    command: Command
    templates: list[str] = Field(default_factory=list, description="Template names")
    netlist: Optional[Path] = Field(default=None, description="Netlist path")
    lengths: list[float] = Field(default_factory=list, description="Channel lengths (um)")
    gm_over_id: list[float] = Field(default_factory=list, description="gm/Id targets (S/A)")
    samples: Optional[int] = Field(default=None, ge=1, description="Monte Carlo samples")
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    temperature: Optional[float] = Field(default=None, gt=0.0, description="Noise temperature (K)")
    chi: Optional[float] = Field(default=None, ge=0.0, lt=1.0, description="Back-gate coupling override")
    avt: Optional[float] = Field(default=None, ge=0.0, description="Threshold mismatch coefficient (V*um)")
    out: Optional[Path] = Field(default=None, description="CSV path; stdout when unset")
    sweep: SweepAxis = Field(default_factory=SweepAxis)

    @field_validator("lengths")
    @classmethod
    def validate_lengths(cls, v: list[float]) -> list[float]:
        if any(not x > 0.0 for x in v):
            raise ValueError("channel lengths must be positive")
        return v

    @model_validator(mode="after")
    def validate_input(self) -> "RunConfig":
        """Exactly one of template and netlist."""
        if bool(self.templates) == (self.netlist is not None):
            raise ValueError("give exactly one of --template and --netlist")
        return self
