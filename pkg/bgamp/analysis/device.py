"""
Back-gated MOS compact model.

Drain current follows a single smooth interpolation between weak and
strong inversion::

    I_D = I0 * F(u)^2 * (1 + lambda * vds)
    F(u) = ln(1 + exp(u / 2))
    u = (vgs - vt0 + chi * vbs - vt_offset) / (n * U_T)
    I0 = 2 * n * kprime * (W / L) * U_T^2

with lambda = lambda0 / L. The back gate shifts the threshold linearly,
so every back-gate derivative is the matching gate derivative scaled by
a power of ``chi_mag``. P devices are evaluated in the mirrored frame.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from bgamp.core.config import thermal_voltage
from bgamp.core.exceptions import DomainError
from bgamp.models.device import BiasTuple, DerivativeSet, DeviceParams, Polarity

U_T = thermal_voltage()

# relative tolerance of BiasTuple.ids against the model
_BIAS_RTOL = 1e-9


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError("Terminal voltages must be finite", {"value": v})


def _normalized_overdrive(params: DeviceParams, vgs: float, vbs: float) -> float:
    s = params.polarity.sign
    return (s * vgs - params.vt0) + (params.chi_mag * (s * vbs) - params.vt_offset)


def _interp(u: float) -> tuple[float, float, float, float]:
    """F(u) and its first three u-derivatives."""
    f = float(np.logaddexp(0.0, 0.5 * u))
    sig = float(expit(0.5 * u))
    sig_c = float(expit(-0.5 * u))
    f1 = 0.5 * sig
    f2 = 0.25 * sig * sig_c
    f3 = 0.125 * sig * sig_c * (sig_c - sig)
    return f, f1, f2, f3


def _shape(u: float) -> tuple[float, float, float, float]:
    """G = F^2 and its first three u-derivatives."""
    f, f1, f2, f3 = _interp(u)
    return (
        f * f,
        2.0 * f * f1,
        2.0 * f1 * f1 + 2.0 * f * f2,
        6.0 * f1 * f2 + 2.0 * f * f3,
    )


def drain_current(params: DeviceParams, vgs: float, vds: float, vbs: float) -> float:
    """
    Drain current into the drain terminal.

    Args:
        params: Device card
        vgs: Gate-source voltage (V)
        vds: Drain-source voltage (V)
        vbs: Back-gate-source voltage (V)

    Returns:
        Signed drain current in amperes (negative for a conducting P device)

    Raises:
        DomainError: If any voltage is not finite
    """
    _check_finite(vgs, vds, vbs)
    s = params.polarity.sign
    n_ut = params.n_slope * U_T
    f, *_ = _interp(_normalized_overdrive(params, vgs, vbs) / n_ut)
    return s * params.specific_current * f * f * (1.0 + params.channel_lambda * (s * vds))


def evaluate(params: DeviceParams, vgs: float, vds: float, vbs: float) -> tuple[float, float, float, float]:
    """Current and first-order conductances (ids, gm, gds, gmb) in the actual frame."""
    _check_finite(vgs, vds, vbs)
    s = params.polarity.sign
    n_ut = params.n_slope * U_T
    lam = params.channel_lambda
    f, f1, _, _ = _interp(_normalized_overdrive(params, vgs, vbs) / n_ut)
    i0 = params.specific_current
    clm = 1.0 + lam * (s * vds)
    h0 = i0 * f * f
    h1 = i0 * 2.0 * f * f1 / n_ut
    return s * h0 * clm, h1 * clm, h0 * lam, params.chi_mag * h1 * clm


def make_bias(params: DeviceParams, vgs: float, vds: float, vbs: float) -> BiasTuple:
    """Build a self-consistent BiasTuple at the given terminal voltages."""
    return BiasTuple(vgs=vgs, vds=vds, vbs=vbs, ids=drain_current(params, vgs, vds, vbs))


@lru_cache(maxsize=None)
def _factorial_weight(p: int, q: int, r: int) -> float:
    return 1.0 / (math.factorial(p) * math.factorial(q) * math.factorial(r))


def derivatives(params: DeviceParams, bias: BiasTuple, order: int = 3) -> DerivativeSet:
    """
    Taylor coefficients of the drain current up to ``order``.

    Args:
        params: Device card
        bias: Operating bias; ``ids`` must agree with the model
        order: Highest total derivative order (1..3)

    Returns:
        DerivativeSet in the actual (signed) frame

    Raises:
        DomainError: If order is outside 1..3 or the bias is inconsistent
    """
    if order not in (1, 2, 3):
        raise DomainError(f"Derivative order must be 1, 2 or 3, got {order}")
    expected = drain_current(params, bias.vgs, bias.vds, bias.vbs)
    if abs(bias.ids - expected) > _BIAS_RTOL * abs(expected) + 1e-18:
        raise DomainError(
            "Bias tuple current does not match the model",
            {"ids": bias.ids, "model_ids": expected},
        )

    s = params.polarity.sign
    n_ut = params.n_slope * U_T
    lam = params.channel_lambda
    chi = params.chi_mag
    i0 = params.specific_current
    g = _shape(_normalized_overdrive(params, bias.vgs, bias.vbs) / n_ut)
    # h[k]: k-th derivative of I0*G with respect to the effective gate voltage
    h = [i0 * g[k] / n_ut**k for k in range(4)]
    clm = 1.0 + lam * (s * bias.vds)

    def coeff(p: int, q: int, r: int) -> float:
        total = p + q + r
        if total > order or q >= 2:
            return 0.0
        drain_factor = clm if q == 0 else lam
        sign = s ** (total + 1)
        return sign * chi**r * h[p + r] * drain_factor * _factorial_weight(p, q, r)

    return DerivativeSet(
        polarity=params.polarity,
        order=order,
        gm=(coeff(1, 0, 0), coeff(2, 0, 0), coeff(3, 0, 0)),
        gds=(coeff(0, 1, 0), coeff(0, 2, 0), coeff(0, 3, 0)),
        gmb=(coeff(0, 0, 1), coeff(0, 0, 2), coeff(0, 0, 3)),
        x11=coeff(1, 1, 0),
        x12=coeff(1, 2, 0),
        x21=coeff(2, 1, 0),
        y11=coeff(0, 1, 1),
        y12=coeff(0, 2, 1),
        y21=coeff(0, 1, 2),
        w11=coeff(1, 0, 1),
        w12=coeff(1, 0, 2),
        w21=coeff(2, 0, 1),
        t111=coeff(1, 1, 1),
    )


def gm_over_id(params: DeviceParams, bias: BiasTuple) -> float:
    """Transconductance efficiency g_m1 / |I_D| in S/A."""
    n_ut = params.n_slope * U_T
    f, f1, _, _ = _interp(_normalized_overdrive(params, bias.vgs, bias.vbs) / n_ut)
    if f == 0.0:
        return weak_inversion_ceiling(params)
    return 2.0 * f1 / (f * n_ut)


def weak_inversion_ceiling(params: DeviceParams) -> float:
    """Upper bound of gm/Id, reached in deep weak inversion: 1/(n U_T)."""
    return 1.0 / (params.n_slope * U_T)


def gm_over_id_bias(params: DeviceParams, target: float, vds: float, vbs: float = 0.0) -> float:
    """
    Gate-source voltage at which the device reaches a gm/Id target.

    Args:
        params: Device card
        target: Desired gm/Id in S/A
        vds: Drain-source voltage (actual frame)
        vbs: Back-gate-source voltage (actual frame)

    Returns:
        Gate-source voltage in the actual frame (negative for P devices)

    Raises:
        DomainError: If the target is not below the weak-inversion ceiling
    """
    _check_finite(target, vds, vbs)
    ceiling = weak_inversion_ceiling(params)
    if target <= 0.0 or target >= ceiling:
        raise DomainError(
            f"gm/Id target {target:.4g} S/A is not reachable; the weak-inversion "
            f"ceiling 1/(n*U_T) is {ceiling:.4g} S/A",
            {"target": target, "ceiling": ceiling},
        )
    n_ut = params.n_slope * U_T
    ratio = target * n_ut

    def excess(u: float) -> float:
        f, f1, _, _ = _interp(u)
        return 2.0 * f1 / f - ratio

    lo, hi = -80.0, 4.0 / ratio + 10.0
    if excess(lo) <= 0.0:
        raise DomainError(
            f"gm/Id target {target:.4g} S/A is numerically at the ceiling {ceiling:.4g} S/A",
            {"target": target, "ceiling": ceiling},
        )
    u = brentq(excess, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=200)
    s = params.polarity.sign
    vgs_norm = u * n_ut + params.vt0 + params.vt_offset - params.chi_mag * (s * vbs)
    return s * vgs_norm


def default_card(polarity: Polarity, **overrides: float) -> DeviceParams:
    """
    Default device card.

    N and P cards are mirrored so a complementary inverter trips at
    mid-supply. At V_GS = 0.9 V the default device sits near gm/Id = 15 S/A.
    """
    values: dict[str, object] = {
        "polarity": polarity,
        "vt0": 0.8,
        "kprime": 300e-6,
        "n_slope": 1.2,
        "lambda0": 0.05,
        "chi_mag": 0.2,
        "gamma_noise": 1.0,
        "k_flicker": 1e-25,
        "cox_area": 0.012,
        "width": 10.0,
        "length": 0.15,
    }
    values.update(overrides)
    return DeviceParams.model_validate(values)


def default_nmos(**overrides: float) -> DeviceParams:
    return default_card(Polarity.N, **overrides)


def default_pmos(**overrides: float) -> DeviceParams:
    return default_card(Polarity.P, **overrides)
