"""
Device model records.

This module defines the parameter card of a back-gated MOS device, the
terminal bias at which it is evaluated, and the set of Taylor
coefficients of its drain current around that bias.
"""

from enum import Enum

from pydantic import Field, model_validator

from bgamp.core.config import thermal_voltage
from bgamp.core.exceptions import IdealLimitError
from bgamp.models.base import FrozenModel

Triple = tuple[float, float, float]


class Polarity(str, Enum):
    """Channel type of a device."""

    N = "n"
    P = "p"

    @property
    def sign(self) -> float:
        """+1 for N devices, -1 for P devices (terminal voltage/current mirror)."""
        return 1.0 if self is Polarity.N else -1.0

    def flipped(self) -> "Polarity":
        return Polarity.P if self is Polarity.N else Polarity.N


class DeviceParams(FrozenModel):
    """
    Parameter card of one back-gated device.

    Voltages are expressed in the N-equivalent frame: for P devices
    ``vt0`` is the threshold magnitude and terminal voltages are mirrored
    before evaluation. Geometry is in micrometres.
    """

    polarity: Polarity = Field(description="Channel type")
    vt0: float = Field(allow_inf_nan=False, description="Threshold at zero back-gate bias (V)")
    kprime: float = Field(gt=0.0, allow_inf_nan=False, description="Process transconductance mu*Cox (A/V^2)")
    n_slope: float = Field(default=1.2, ge=1.0, allow_inf_nan=False, description="Subthreshold slope factor")
    lambda0: float = Field(
        default=0.05, ge=0.0, allow_inf_nan=False,
        description="Channel-length modulation coefficient (1/V * um)",
    )
    chi_mag: float = Field(
        default=0.2, ge=0.0, lt=1.0, allow_inf_nan=False,
        description="Back-gate coupling |dVt/dVbs|",
    )
    gamma_noise: float = Field(default=1.0, gt=0.0, allow_inf_nan=False, description="Thermal noise factor")
    k_flicker: float = Field(default=1e-25, ge=0.0, allow_inf_nan=False, description="Flicker coefficient (V^2*F)")
    cox_area: float = Field(default=0.012, gt=0.0, allow_inf_nan=False, description="Gate capacitance per area (F/m^2)")
    width: float = Field(default=10.0, gt=0.0, allow_inf_nan=False, description="Channel width (um)")
    length: float = Field(default=0.15, gt=0.0, allow_inf_nan=False, description="Channel length (um)")
    vt_offset: float = Field(
        default=0.0, allow_inf_nan=False,
        description="Threshold offset applied by bias matching (V)",
    )

    @property
    def channel_lambda(self) -> float:
        """Channel-length modulation at this length (1/V)."""
        return self.lambda0 / self.length

    @property
    def specific_current(self) -> float:
        """I0 = 2 n kprime (W/L) U_T^2."""
        ut = thermal_voltage()
        return 2.0 * self.n_slope * self.kprime * (self.width / self.length) * ut * ut

    def with_geometry(self, width: float | None = None, length: float | None = None) -> "DeviceParams":
        changes: dict[str, float] = {}
        if width is not None:
            changes["width"] = width
        if length is not None:
            changes["length"] = length
        return self.evolve(**changes)

    def with_chi(self, chi_mag: float) -> "DeviceParams":
        return self.evolve(chi_mag=chi_mag)

    def mirrored(self) -> "DeviceParams":
        """Same card with the opposite polarity."""
        return self.evolve(polarity=self.polarity.flipped())


class BiasTuple(FrozenModel):
    """Terminal voltages and drain current of one device at an operating point."""

    vgs: float = Field(allow_inf_nan=False, description="Gate-source voltage (V)")
    vds: float = Field(allow_inf_nan=False, description="Drain-source voltage (V)")
    vbs: float = Field(allow_inf_nan=False, description="Back-gate-source voltage (V)")
    ids: float = Field(allow_inf_nan=False, description="Drain current into the drain terminal (A)")


class DerivativeSet(FrozenModel):
    """
    Taylor coefficients of the drain current at one bias point.

    Entry k of ``gm``/``gds``/``gmb`` is (1/k!) times the k-th partial
    derivative with respect to the gate, drain and back-gate voltage.
    Mixed entries are named by their orders:
    ``x_pq`` (gate^p, drain^q), ``y_pq`` (back-gate^p, drain^q),
    ``w_pq`` (gate^p, back-gate^q) and ``t111`` (gate, drain, back-gate),
    each divided by the product of the factorials of its orders.

    Coefficients describe the actual signed drain current with respect to
    the actual terminal voltages, so contributions of N and P devices
    sharing nodes combine by plain summation. Entries above ``order``
    are zero.
    """

    polarity: Polarity
    order: int = Field(default=3, ge=1, le=3)
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

    @model_validator(mode="after")
    def _finite(self) -> "DerivativeSet":
        values = [*self.gm, *self.gds, *self.gmb, self.x11, self.x12, self.x21,
                  self.y11, self.y12, self.y21, self.w11, self.w12, self.w21, self.t111]
        if not all(abs(v) < float("inf") for v in values):
            raise ValueError("derivative entries must be finite")
        return self

    @property
    def ro(self) -> float:
        """Output resistance 1/g_ds1."""
        if self.gds[0] == 0.0:
            raise IdealLimitError("output resistance")
        return 1.0 / self.gds[0]
