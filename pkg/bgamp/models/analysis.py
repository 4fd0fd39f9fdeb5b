"""
Analysis result records.

Operating points, DC transfer curves, power series of a stage's
transfer characteristic, combined pair conductances and bias-match
results.
"""

from enum import Enum

from pydantic import Field, model_validator

from bgamp.models.base import FrozenModel
from bgamp.models.circuit import Circuit
from bgamp.models.device import BiasTuple, Triple


class OperatingPoint(FrozenModel):
    """Solved DC state of a circuit."""

    node_voltages: dict[str, float]
    branch_currents: dict[str, float] = Field(default_factory=dict)
    biases: dict[str, BiasTuple]
    converged: bool
    residual: float = Field(ge=0.0, description="Largest KCL residual (A)")
    iterations: int = Field(default=0, ge=0)
    source_steps: int = Field(default=0, ge=0)

    def voltage(self, node: str) -> float:
        if node == Circuit.GROUND:
            return 0.0
        return self.node_voltages[node]


class TransferCurve(FrozenModel):
    """Output voltage against swept input value."""

    input_values: tuple[float, ...]
    output_values: tuple[float, ...]
    monotone_span: tuple[int, int] = Field(
        description="Inclusive index range of the longest strictly monotone run"
    )

    @model_validator(mode="after")
    def _aligned(self) -> "TransferCurve":
        if len(self.input_values) != len(self.output_values):
            raise ValueError("input and output lengths differ")
        lo, hi = self.monotone_span
        if not 0 <= lo <= hi < len(self.input_values):
            raise ValueError("monotone span outside the curve")
        return self

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.input_values, self.output_values))


class SeriesMode(str, Enum):
    """Origin of a power series."""

    OPEN_LOOP = "open_loop"
    BACKGATE = "backgate"
    FIT = "fit"


class CrossTerms(str, Enum):
    """Whether mixed-derivative terms enter the coefficients."""

    EXCLUDED = "excluded"
    INCLUDED = "included"


class PowerSeries(FrozenModel):
    """v_out - V_OUT = a1 x + a2 x^2 + a3 x^3 around a bias point."""

    a1: float = Field(allow_inf_nan=False)
    a2: float = Field(allow_inf_nan=False)
    a3: float = Field(allow_inf_nan=False)
    mode: SeriesMode
    cross_terms: CrossTerms
    center: float | None = None
    amplitude: float | None = None


class CombinedConductances(FrozenModel):
    """Sums of the Taylor coefficients of the devices sharing an output node."""

    gm: Triple
    gds: Triple
    gmb: Triple
    x11: float = 0.0
    x12: float = 0.0
    x21: float = 0.0
    y11: float = 0.0
    y12: float = 0.0
    y21: float = 0.0
    w11: float = 0.0
    w12: float = 0.0
    w21: float = 0.0
    t111: float = 0.0


class BiasMatch(FrozenModel):
    """
    Open-loop and back-gate operating points at identical drain currents.

    ``offsets`` maps device names to the threshold offsets applied to the
    back-gate circuit; ``backgate_circuit`` carries them.
    """

    offsets: dict[str, float]
    open_loop: OperatingPoint
    backgate: OperatingPoint
    backgate_circuit: Circuit
