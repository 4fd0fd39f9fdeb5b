"""
Power-series distortion analysis.

The output of a common-source stage is expanded as
``v_out - V_OUT = a1 x + a2 x^2 + a3 x^3`` in the input deviation ``x``
by matching coefficients in the output-node KCL. Without feedback the
output only moves the drains; with back-gate feedback it moves the
drains and back gates together, so every drain coefficient picks up the
matching back-gate and mixed terms.

Cross derivatives are left out by default (``CrossTerms.EXCLUDED``),
which keeps a1 exact but not a3. ``CrossTerms.INCLUDED`` gives the exact
third-order series. ``fit_series`` is the independent oracle: a
polynomial fit of a solved DC transfer curve.
"""

import math
import time
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.stats import linregress

from bgamp.analysis.dcsolve import bias_match, sweep_dc
from bgamp.analysis.device import gm_over_id
from bgamp.analysis.smallsig import derivative_sets
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import DomainError, FitError, IdealLimitError
from bgamp.core.logging import get_analysis_logger, log_performance_metric
from bgamp.models.analysis import CombinedConductances, CrossTerms, PowerSeries, SeriesMode, TransferCurve
from bgamp.models.circuit import Topology
from bgamp.models.device import DerivativeSet, Polarity
from bgamp.schemas.reports import EnhancementReport

log = get_analysis_logger("distortion")

# relative a1 agreement between the full-order and third-order fits
_A1_SELF_CHECK = 1e-4
_MIN_FIT_POINTS = 50

_CROSS_FIELDS = ("x11", "x12", "x21", "y11", "y12", "y21", "w11", "w12", "w21", "t111")


def combine(dset_n: DerivativeSet, dset_p: DerivativeSet) -> CombinedConductances:
    """
    Combined conductances of an N/P pair sharing the output node.

    Raises:
        DomainError: If the sets are not one N and one P device
    """
    if dset_n.polarity is not Polarity.N or dset_p.polarity is not Polarity.P:
        raise DomainError(
            "combine needs an N set and a P set, got "
            f"{dset_n.polarity.name} and {dset_p.polarity.name}"
        )
    return combine_all((dset_n, dset_p))


def combine_all(dsets: Sequence[DerivativeSet]) -> CombinedConductances:
    """Elementwise sums of any number of derivative sets."""

    def triple(name: str) -> tuple[float, float, float]:
        rows = [getattr(d, name) for d in dsets]
        return (
            math.fsum(r[0] for r in rows),
            math.fsum(r[1] for r in rows),
            math.fsum(r[2] for r in rows),
        )

    cross = {name: math.fsum(getattr(d, name) for d in dsets) for name in _CROSS_FIELDS}
    return CombinedConductances(gm=triple("gm"), gds=triple("gds"), gmb=triple("gmb"), **cross)


class _Coefficients(NamedTuple):
    """KCL coefficients of x^p y^q at the output node."""

    c10: float
    c20: float
    c30: float
    c01: float
    c02: float
    c03: float
    c11: float
    c21: float
    c12: float


def _solve(c: _Coefficients, mode: SeriesMode, cross_terms: CrossTerms) -> PowerSeries:
    if c.c01 == 0.0:
        raise IdealLimitError("small-signal gain")
    a1 = -c.c10 / c.c01
    a2 = -(c.c20 + c.c11 * a1 + c.c02 * a1 * a1) / c.c01
    a3 = -(
        c.c30
        + c.c11 * a2
        + c.c21 * a1
        + c.c12 * a1 * a1
        + 2.0 * c.c02 * a1 * a2
        + c.c03 * a1**3
    ) / c.c01
    return PowerSeries(a1=a1, a2=a2, a3=a3, mode=mode, cross_terms=cross_terms)


def series_open_loop(
    G: CombinedConductances,
    cross_terms: CrossTerms = CrossTerms.EXCLUDED,
) -> PowerSeries:
    """
    Series coefficients without feedback.

    EXCLUDED gives a1 = -G_m1/G_ds1, a2 = -(G_m2 + G_ds2 a1^2)/G_ds1 and
    a3 = -(2 G_ds2 a1 a2 + G_m3 + G_ds3 a1^3)/G_ds1.

    Raises:
        IdealLimitError: If G_ds1 is zero
    """
    included = cross_terms is CrossTerms.INCLUDED
    coefficients = _Coefficients(
        c10=G.gm[0], c20=G.gm[1], c30=G.gm[2],
        c01=G.gds[0], c02=G.gds[1], c03=G.gds[2],
        c11=G.x11 if included else 0.0,
        c21=G.x21 if included else 0.0,
        c12=G.x12 if included else 0.0,
    )
    return _solve(coefficients, SeriesMode.OPEN_LOOP, cross_terms)


def series_backgate(
    G: CombinedConductances,
    cross_terms: CrossTerms = CrossTerms.EXCLUDED,
) -> PowerSeries:
    """
    Series coefficients with the back gates tied to the output.

    EXCLUDED replaces every G_dsk of the open-loop series with
    G_dsk + G_mbk. INCLUDED also carries the drain/back-gate and
    gate/back-gate mixed terms.

    Raises:
        IdealLimitError: If G_ds1 + G_mb1 is zero
    """
    if cross_terms is CrossTerms.INCLUDED:
        coefficients = _Coefficients(
            c10=G.gm[0], c20=G.gm[1], c30=G.gm[2],
            c01=G.gds[0] + G.gmb[0],
            c02=G.gds[1] + G.gmb[1] + G.y11,
            c03=G.gds[2] + G.gmb[2] + G.y12 + G.y21,
            c11=G.x11 + G.w11,
            c21=G.x21 + G.w21,
            c12=G.x12 + G.t111 + G.w12,
        )
    else:
        coefficients = _Coefficients(
            c10=G.gm[0], c20=G.gm[1], c30=G.gm[2],
            c01=G.gds[0] + G.gmb[0],
            c02=G.gds[1] + G.gmb[1],
            c03=G.gds[2] + G.gmb[2],
            c11=0.0, c21=0.0, c12=0.0,
        )
    return _solve(coefficients, SeriesMode.BACKGATE, cross_terms)


def ip3(series: PowerSeries) -> float:
    """
    Input-referred third-order intercept sqrt((4/3)|a1/a3|) in volts.

    Raises:
        IdealLimitError: If a3 is zero
    """
    if series.a3 == 0.0:
        raise IdealLimitError("IP3")
    return math.sqrt(4.0 / 3.0 * abs(series.a1 / series.a3))


def ip3_enhancement(G: CombinedConductances) -> float:
    """Predicted IP3 enhancement (1 + G_mb1/G_ds1)^2."""
    if G.gds[0] == 0.0:
        raise IdealLimitError("IP3 enhancement")
    return (1.0 + G.gmb[0] / G.gds[0]) ** 2


def enhancement_report(G: CombinedConductances) -> EnhancementReport:
    """Predicted enhancement next to the ratios of both series variants."""
    predicted = ip3_enhancement(G)
    excluded = ip3(series_backgate(G)) / ip3(series_open_loop(G))
    exact = ip3(series_backgate(G, CrossTerms.INCLUDED)) / ip3(series_open_loop(G, CrossTerms.INCLUDED))
    return EnhancementReport(
        predicted=predicted,
        loop_factor=1.0 + G.gmb[0] / G.gds[0],
        excluded_ratio=excluded,
        exact_ratio=exact,
    )


def _fit(t: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    coefficients, (_, rank, _, _) = P.polyfit(t, y, order, full=True)
    if rank < order + 1:
        raise FitError(f"Ill-conditioned order-{order} fit (rank {rank})", {"order": order, "rank": rank})
    return coefficients


def fit_series(
    curve: TransferCurve,
    center: float,
    amplitude: Optional[float] = None,
    order: Optional[int] = None,
    mode: SeriesMode = SeriesMode.FIT,
) -> PowerSeries:
    """
    Least-squares polynomial fit of a transfer curve about ``center``.

    The fit runs in the scaled variable (x - center)/amplitude and is
    repeated at order 3; the two a1 values must agree to 1e-4 relative,
    otherwise the amplitude is too large for a third-order description.

    Args:
        curve: Solved DC transfer curve
        center: Input bias the series is expanded around (V)
        amplitude: Half-width of the fit window; defaults to ``FIT_AMPLITUDE_V``
        order: Polynomial order 3..5; defaults to ``FIT_ORDER``

    Returns:
        PowerSeries with cross_terms INCLUDED (the curve carries every term)

    Raises:
        DomainError: On an order outside 3..5 or a non-positive amplitude
        FitError: On insufficient span, too few points, rank deficiency or a
            failed amplitude self-check
    """
    settings = get_settings()
    amplitude = settings.FIT_AMPLITUDE_V if amplitude is None else amplitude
    order = settings.FIT_ORDER if order is None else order
    if order not in (3, 4, 5):
        raise DomainError(f"Fit order must be 3, 4 or 5, got {order}")
    if not amplitude > 0.0:
        raise DomainError("Fit amplitude must be positive", {"amplitude": amplitude})

    x = np.asarray(curve.input_values, dtype=float)
    y = np.asarray(curve.output_values, dtype=float)
    slack = 1e-9 * amplitude
    if x.min() > center - amplitude + slack or x.max() < center + amplitude - slack:
        raise FitError(
            f"Curve spans [{x.min():.6g}, {x.max():.6g}] V, fit needs "
            f"[{center - amplitude:.6g}, {center + amplitude:.6g}] V",
            {"center": center, "amplitude": amplitude},
        )
    window = np.abs(x - center) <= amplitude + slack
    if int(window.sum()) < _MIN_FIT_POINTS:
        raise FitError(
            f"Fit window holds {int(window.sum())} points, needs at least {_MIN_FIT_POINTS}",
            {"points": int(window.sum())},
        )
    t = (x[window] - center) / amplitude
    yw = y[window]

    full = _fit(t, yw, order)
    cubic = full if order == 3 else _fit(t, yw, 3)
    a1_full, a1_cubic = full[1] / amplitude, cubic[1] / amplitude
    if a1_full == 0.0 or abs(a1_cubic - a1_full) > _A1_SELF_CHECK * abs(a1_full):
        raise FitError(
            f"Fit amplitude {amplitude:.3g} V too large: order-{order} and order-3 a1 "
            f"differ ({a1_full:.10g} vs {a1_cubic:.10g})",
            {"amplitude": amplitude, "a1": a1_full, "a1_cubic": a1_cubic},
        )
    return PowerSeries(
        a1=float(a1_full),
        a2=float(full[2] / amplitude**2),
        a3=float(full[3] / amplitude**3),
        mode=mode,
        cross_terms=CrossTerms.INCLUDED,
        center=center,
        amplitude=amplitude,
    )


class DistortionPoint(NamedTuple):
    """Distortion figures of a CCS stage at one channel length."""

    length_um: float
    gm_over_id: float
    ip3_ol: float
    ip3_bg: float
    ip3_ol_calc: float
    ip3_bg_calc: float
    enhancement_pred: float
    enhancement_measured: float


def measure_ccs(
    topology: Topology,
    amplitude: Optional[float] = None,
    points: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> DistortionPoint:
    """
    Analytic and fitted IP3 of a CCS stage with and without feedback.

    Both stages are bias-matched. The back-gate fit window is widened by
    the loop factor so both fits see the same output swing.

    Raises:
        DomainError: For a non-CCS topology
    """
    if topology.kind.differential:
        raise DomainError("Distortion sweeps need a CCS topology", {"kind": topology.kind.value})
    settings = settings or get_settings()
    amplitude = settings.FIT_AMPLITUDE_V if amplitude is None else amplitude
    points = settings.FIT_POINTS if points is None else points

    matched = bias_match(topology, settings=settings)
    dsets = derivative_sets(topology, matched.open_loop)
    G = combine(dsets["M1"], dsets["M2"])
    report = enhancement_report(G)
    ip3_ol_calc = ip3(series_open_loop(G, CrossTerms.INCLUDED))
    ip3_bg_calc = ip3(series_backgate(G, CrossTerms.INCLUDED))

    center = topology.cmfb_ref
    fits = []
    for circuit, amp, mode in (
        (topology, amplitude, SeriesMode.OPEN_LOOP),
        (matched.backgate_circuit, amplitude * report.loop_factor, SeriesMode.BACKGATE),
    ):
        curve = sweep_dc(circuit, "in", center - amp, center + amp, points, "out", settings=settings)
        fits.append(fit_series(curve, center, amp, mode=mode))
    ip3_ol, ip3_bg = ip3(fits[0]), ip3(fits[1])
    m1 = topology.device("M1")
    return DistortionPoint(
        length_um=m1.params.length,
        gm_over_id=gm_over_id(m1.params, matched.open_loop.biases["M1"]),
        ip3_ol=ip3_ol,
        ip3_bg=ip3_bg,
        ip3_ol_calc=ip3_ol_calc,
        ip3_bg_calc=ip3_bg_calc,
        enhancement_pred=report.predicted,
        enhancement_measured=ip3_bg / ip3_ol,
    )


def distortion_sweep(
    topology: Topology,
    lengths: Sequence[float],
    amplitude: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> list[DistortionPoint]:
    """``measure_ccs`` over a list of channel lengths (um), in order."""
    start = time.perf_counter()
    rows = [measure_ccs(topology.with_length(L), amplitude, settings=settings) for L in lengths]
    log_performance_metric("distortion_sweep", time.perf_counter() - start)
    return rows


def enhancement_exponent(points: Sequence[DistortionPoint]) -> float:
    """
    Slope of log(measured IP3 ratio) against log(1 + G_mb1 r_o||).

    Raises:
        DomainError: With fewer than two points
    """
    if len(points) < 2:
        raise DomainError("Exponent regression needs at least two points")
    loop = np.log([math.sqrt(p.enhancement_pred) for p in points])
    measured = np.log([p.enhancement_measured for p in points])
    return float(linregress(loop, measured).slope)
