"""
Report schemas.

This module defines the result models returned by the small-signal,
noise, distortion and mismatch analyses.
"""

import math
from typing import ClassVar

from pydantic import BaseModel, Field, model_validator

from bgamp.models.circuit import TopologyKind


class GainEstimate(BaseModel):
    """Closed-form back-gate gain with its high-loop-gain asymptote."""

    exact: float = Field(description="Exact closed-form gain (V/V)")
    asymptote: float = Field(description="-sum(g_m1)/sum(g_mb1) (V/V)")
    loop_quantity: float = Field(description="sum(g_mb1) * r_o|| (dimensionless)")

    @property
    def gap(self) -> float:
        """Relative distance of the exact gain from its asymptote."""
        if math.isinf(self.asymptote):
            return math.inf
        return (self.exact - self.asymptote) / self.asymptote


class SmallSignalReport(BaseModel):
    """Small-signal figures of one solved amplifier."""

    kind: TopologyKind
    a_v_dm: float = Field(description="Differential (or single-ended) gain (V/V)")
    a_v_cm: float | None = Field(default=None, description="Common-mode gain (V/V)")
    cmrr_db: float | None = None
    gm_total: float = Field(description="sum(g_m1) of the output-node devices (S)")
    gmb_total: float = Field(description="sum(g_mb1) of the fed-back devices (S)")
    ro_parallel: float = Field(description="r_o of the output node (ohm)")
    loop_quantity: float = Field(description="gmb_total * ro_parallel")

    @classmethod
    def from_gains(
        cls,
        kind: TopologyKind,
        a_v_dm: float,
        a_v_cm: float | None,
        gm_total: float,
        gmb_total: float,
        ro_parallel: float,
    ) -> "SmallSignalReport":
        cmrr = None
        if a_v_cm is not None:
            cmrr = math.inf if a_v_cm == 0.0 else 20.0 * math.log10(abs(a_v_dm / a_v_cm))
        return cls(
            kind=kind,
            a_v_dm=a_v_dm,
            a_v_cm=a_v_cm,
            cmrr_db=cmrr,
            gm_total=gm_total,
            gmb_total=gmb_total,
            ro_parallel=ro_parallel,
            loop_quantity=gmb_total * ro_parallel,
        )

    CSV_HEADER: ClassVar[tuple[str, ...]] = (
        "topology", "a_v_dm", "a_v_cm", "cmrr_db", "gm_total_s", "gmb_total_s", "ro_parallel_ohm", "loop_quantity",
    )

    def to_csv_row(self) -> tuple[float | str | None, ...]:
        """One CSV row in ``CSV_HEADER`` order."""
        return (
            self.kind.value, self.a_v_dm, self.a_v_cm, self.cmrr_db,
            self.gm_total, self.gmb_total, self.ro_parallel, self.loop_quantity,
        )


class NoiseReport(BaseModel):
    """Input-referred voltage noise PSD on a frequency grid."""

    freqs: list[float] = Field(description="Frequencies (Hz), strictly increasing")
    psd: list[float] = Field(description="Input-referred PSD (V^2/Hz)")
    thermal_floor: float = Field(ge=0.0, description="Frequency-independent part (V^2/Hz)")
    temperature: float = Field(gt=0.0, description="Noise temperature (K)")
    differential: bool = False

    @model_validator(mode="after")
    def _aligned(self) -> "NoiseReport":
        if len(self.freqs) != len(self.psd):
            raise ValueError("freqs and psd lengths differ")
        if any(b <= a for a, b in zip(self.freqs, self.freqs[1:])):
            raise ValueError("freqs must be strictly increasing")
        return self


class EnhancementReport(BaseModel):
    """IP3 enhancement of back-gate feedback at one bias point."""

    predicted: float = Field(description="(1 + G_mb1 / G_ds1)^2")
    loop_factor: float = Field(description="1 + G_mb1 * r_o")
    excluded_ratio: float = Field(description="IP3 ratio from series without cross terms")
    exact_ratio: float = Field(description="IP3 ratio from series with cross terms")

    @property
    def exact_over_predicted(self) -> float:
        return self.exact_ratio / self.predicted


class MismatchSpec(BaseModel):
    """Mismatch model for Monte Carlo runs."""

    avt_v_um: float = Field(default=1e-3, ge=0.0, description="Threshold mismatch coefficient (V*um)")
    sigma_kprime_rel: float = Field(default=0.002, ge=0.0, description="Relative kprime standard deviation")
    samples: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_failure_fraction: float = Field(default=0.05, ge=0.0, le=1.0)


class CmrrStats(BaseModel):
    """CMRR statistics of one topology at one channel length."""

    kind: TopologyKind
    length_um: float
    mean_db: float
    std_db: float = Field(ge=0.0)
    samples: int = Field(ge=0, description="Converged samples used in the statistics")
    n_failed: int = Field(ge=0)
    seed: int
    valid: bool = True
