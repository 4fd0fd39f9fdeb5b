"""
Linearized amplifier analysis.

Closed-form gains of the complementary common-source stage with and
without back-gate feedback, common-mode gains of the two CMFB schemes,
input-referred noise, and a nodal oracle that solves the linearized
circuit directly. Every closed form here is checked against the oracle.
"""

import math
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from bgamp.analysis.dcsolve import linearize
from bgamp.analysis.device import derivatives
from bgamp.core.config import BOLTZMANN_J_PER_K, Settings, get_settings
from bgamp.core.exceptions import DomainError, IdealLimitError, SingularCircuitError
from bgamp.core.logging import get_analysis_logger
from bgamp.models.analysis import OperatingPoint
from bgamp.models.circuit import GROUND, Circuit, Conductance, Topology, TopologyKind
from bgamp.models.device import DerivativeSet, DeviceParams
from bgamp.schemas.reports import GainEstimate, NoiseReport, SmallSignalReport

log = get_analysis_logger("smallsig")

# saturation precondition: g_m1 > SATURATION_RATIO * g_ds1
SATURATION_RATIO = 10.0

Drive = Union[str, Mapping[str, float]]
Output = Union[str, tuple[str, str]]


def _totals(dsets: Sequence[DerivativeSet]) -> tuple[float, float, float]:
    gm = math.fsum(d.gm[0] for d in dsets)
    gds = math.fsum(d.gds[0] for d in dsets)
    gmb = math.fsum(d.gmb[0] for d in dsets)
    return gm, gds, gmb


def _check_saturation(dsets: Sequence[DerivativeSet]) -> None:
    for d in dsets:
        if d.gds[0] > 0.0 and not d.gm[0] > SATURATION_RATIO * d.gds[0]:
            raise DomainError(
                f"{d.polarity.name}-device is not in saturation: g_m1 = {d.gm[0]:.4g} S, "
                f"g_ds1 = {d.gds[0]:.4g} S",
                {"gm": d.gm[0], "gds": d.gds[0]},
            )


def output_resistance(dsets: Sequence[DerivativeSet], load_conductance: float = 0.0) -> float:
    """r_o of the output node: 1 / (sum(g_ds1) + G_L)."""
    g = math.fsum(d.gds[0] for d in dsets) + load_conductance
    if g == 0.0:
        raise IdealLimitError("output resistance")
    return 1.0 / g


def gain_ccs_ol(dsets: Sequence[DerivativeSet], load_conductance: float = 0.0) -> float:
    """
    Open-loop gain of a common-source stage: -sum(g_m1) * r_o||.

    Args:
        dsets: Derivative sets of the devices driving the output node
        load_conductance: Optional shunt load at the output (S)

    Raises:
        DomainError: If a device fails the saturation precondition
        IdealLimitError: If the output node has no conductance
    """
    _check_saturation(dsets)
    gm, gds, _ = _totals(dsets)
    if gds + load_conductance == 0.0:
        raise IdealLimitError("open-loop gain")
    return -gm / (gds + load_conductance)


def gain_ccs_bg(dsets: Sequence[DerivativeSet], load_conductance: float = 0.0) -> GainEstimate:
    """
    Back-gate feedback gain with its asymptote.

    The exact form is -sum(g_m1) r_o|| / (1 + sum(g_mb1) r_o||); the
    asymptote -sum(g_m1)/sum(g_mb1) is what it tends to at high loop gain.
    """
    _check_saturation(dsets)
    gm, gds, gmb = _totals(dsets)
    g_out = gds + load_conductance
    if g_out + gmb == 0.0:
        raise IdealLimitError("back-gate gain")
    asymptote = -gm / gmb if gmb > 0.0 else -math.inf
    loop = gmb / g_out if g_out > 0.0 else math.inf
    return GainEstimate(exact=-gm / (g_out + gmb), asymptote=asymptote, loop_quantity=loop)


def _pair(dsets: Mapping[str, DerivativeSet], a: str, b: str) -> DerivativeSet:
    try:
        first, second = dsets[a], dsets[b]
    except KeyError as exc:
        raise DomainError(f"Derivative set for {exc.args[0]} is required") from None
    return DerivativeSet(
        polarity=first.polarity,
        order=1,
        gm=(0.5 * (first.gm[0] + second.gm[0]), 0.0, 0.0),
        gds=(0.5 * (first.gds[0] + second.gds[0]), 0.0, 0.0),
        gmb=(0.5 * (first.gmb[0] + second.gmb[0]), 0.0, 0.0),
    )


def cm_gain(kind: TopologyKind, dsets: Mapping[str, DerivativeSet]) -> float:
    """
    Closed-form common-mode gain of a differential stage.

    SCMFB: -g_m3,4 / g_m5,6. DCMFB: -1 / ((g_m5,6 + g_m7,8)(r_o5,6 || r_o7,8)).
    Pair values are the averages of the two devices.

    Args:
        kind: DIFF_SCMFB or DIFF_DCMFB
        dsets: Derivative sets keyed by device name (M3..M6, plus M7/M8 for DCMFB)

    Raises:
        DomainError: For a non-differential kind or missing devices
    """
    if not kind.differential:
        raise DomainError(f"Common-mode gain needs a differential topology, got {kind.value}")
    tail_n = _pair(dsets, "M5", "M6")
    if kind is TopologyKind.DIFF_SCMFB:
        load_p = _pair(dsets, "M3", "M4")
        return -load_p.gm[0] / tail_n.gm[0]
    tail_p = _pair(dsets, "M7", "M8")
    return -(tail_n.gds[0] + tail_p.gds[0]) / (tail_n.gm[0] + tail_p.gm[0])


def cmrr_ratio(
    dsets: Mapping[str, DerivativeSet],
    scmfb: Optional[Mapping[str, DerivativeSet]] = None,
) -> float:
    """
    Predicted CMRR gain of dual over single CMFB.

    (g_m3,4 / g_m5,6) (g_m5,6 + g_m7,8)(r_o5,6 || r_o7,8); the first factor
    comes from ``scmfb`` when given, otherwise from ``dsets``.
    """
    single = scmfb if scmfb is not None else dsets
    load_p = _pair(single, "M3", "M4")
    tail_single = _pair(single, "M5", "M6")
    tail_n = _pair(dsets, "M5", "M6")
    tail_p = _pair(dsets, "M7", "M8")
    return (load_p.gm[0] / tail_single.gm[0]) * (tail_n.gm[0] + tail_p.gm[0]) / (
        tail_n.gds[0] + tail_p.gds[0]
    )


def _drive_map(circuit: Circuit, drive: Drive) -> dict[str, float]:
    """Source name -> small-signal amplitude."""
    amplitudes = {drive: 1.0} if isinstance(drive, str) else dict(drive)
    names = {v.name for v in circuit.sources}
    resolved: dict[str, float] = {}
    for key, amp in amplitudes.items():
        if key in names:
            resolved[key] = resolved.get(key, 0.0) + amp
            continue
        try:
            src = circuit.source_driving(key)
        except KeyError:
            raise DomainError(f"'{key}' is neither a source nor a source-driven node") from None
        resolved[src.name] = resolved.get(src.name, 0.0) + amp
    return resolved


def node_response(
    circuit: Circuit,
    op: OperatingPoint,
    drive: Drive,
    conductances: Sequence[Conductance] = (),
) -> dict[str, float]:
    """
    Small-signal node voltages for the given source excitation.

    Raises:
        SingularCircuitError: Naming a floating node when the system is singular
    """
    if conductances:
        circuit = circuit.with_conductances(conductances)
    matrix, nodes, sources = linearize(circuit, op)
    for i, node in enumerate(nodes):
        if not np.any(matrix[i]):
            raise SingularCircuitError(node)
    rhs = np.zeros(matrix.shape[0])
    amplitudes = _drive_map(circuit, drive)
    for k, name in enumerate(sources):
        rhs[len(nodes) + k] = amplitudes.get(name, 0.0)
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        diag = np.abs(np.diag(matrix)[: len(nodes)])
        raise SingularCircuitError(nodes[int(np.argmin(diag))] if nodes else GROUND) from None
    return {node: float(solution[i]) for i, node in enumerate(nodes)}


def _pick(response: Mapping[str, float], node: str) -> float:
    if node == GROUND:
        return 0.0
    try:
        return response[node]
    except KeyError:
        raise DomainError(f"Unknown output node '{node}'") from None


def nodal_oracle(
    circuit: Circuit,
    op: OperatingPoint,
    drive: Drive,
    output: Output,
    conductances: Sequence[Conductance] = (),
) -> float:
    """
    Gain from a linear solve of the stamped small-signal system.

    Every device contributes g_m1, g_ds1 and g_mb1 at its operating point;
    voltage sources are shorted except the driven ones.

    Args:
        circuit: Circuit the operating point belongs to
        op: Converged operating point
        drive: Driven node or source (unit amplitude), or a map of
            node/source to amplitude for weighted multi-source drives
        output: Output node, or (p, n) pair for a differential output
        conductances: Extra shunt conductances, e.g. a load

    Returns:
        Output voltage per unit drive (V/V)
    """
    response = node_response(circuit, op, drive, conductances)
    if isinstance(output, tuple):
        return _pick(response, output[0]) - _pick(response, output[1])
    return _pick(response, output)


def differential_gain(topology: Topology, op: OperatingPoint, circuit: Optional[Circuit] = None) -> float:
    """Oracle differential-mode gain (single-ended gain for CCS kinds)."""
    target = circuit if circuit is not None else topology
    if not topology.kind.differential:
        return nodal_oracle(target, op, topology.input_nodes[0], topology.output_nodes[0])
    inp, inn = topology.input_nodes
    return nodal_oracle(target, op, {inp: 0.5, inn: -0.5}, topology.output_nodes)


def common_mode_gain(
    topology: Topology,
    op: OperatingPoint,
    circuit: Optional[Circuit] = None,
    settings: Optional[Settings] = None,
) -> float:
    """Oracle common-mode gain: output common mode per input common mode."""
    if not topology.kind.differential:
        raise DomainError(f"Common-mode gain needs a differential topology, got {topology.kind.value}")
    settings = settings or get_settings()
    amplitude = settings.CM_TEST_AMPLITUDE_V
    target = circuit if circuit is not None else topology
    inp, inn = topology.input_nodes
    response = node_response(target, op, {inp: amplitude, inn: amplitude})
    outp, outn = topology.output_nodes
    return 0.5 * (_pick(response, outp) + _pick(response, outn)) / amplitude


def derivative_sets(circuit: Circuit, op: OperatingPoint, order: int = 3) -> dict[str, DerivativeSet]:
    """Derivative set of every device at its operating-point bias."""
    return {d.name: derivatives(d.params, op.biases[d.name], order) for d in circuit.devices}


def half_circuit(topology: Topology) -> tuple[str, ...]:
    """Devices whose drains sit on the first output node."""
    out = topology.output_nodes[0]
    return tuple(d.name for d in topology.devices if d.drain == out and d.gate in topology.input_nodes)


def small_signal_report(
    topology: Topology,
    op: OperatingPoint,
    circuit: Optional[Circuit] = None,
    settings: Optional[Settings] = None,
) -> SmallSignalReport:
    """
    Small-signal summary of a solved amplifier.

    Gains come from the nodal oracle; g_m, g_mb and r_o totals describe
    the devices on the first output node.
    """
    target = circuit if circuit is not None else topology
    dsets = derivative_sets(target, op, order=1)
    names = half_circuit(topology)
    half = [dsets[n] for n in names]
    gm, gds, _ = _totals(half)
    gmb = math.fsum(
        dsets[d.name].gmb[0] for d in target.devices if d.name in names and d.backgate == d.drain
    )
    a_dm = differential_gain(topology, op, target)
    a_cm = common_mode_gain(topology, op, target, settings) if topology.kind.differential else None
    return SmallSignalReport.from_gains(
        kind=topology.kind,
        a_v_dm=a_dm,
        a_v_cm=a_cm,
        gm_total=gm,
        gmb_total=gmb,
        ro_parallel=math.inf if gds == 0.0 else 1.0 / gds,
    )


def noise_input_referred(
    devices: Sequence[tuple[DeviceParams, DerivativeSet]],
    freqs: Sequence[float],
    differential: bool = False,
    temperature: Optional[float] = None,
) -> NoiseReport:
    """
    Input-referred voltage noise PSD of a common-source stage.

    Thermal part 4kT sum(gamma g_m) / sum(g_m)^2 plus flicker part
    sum(g_m^2 K / (C_ox W L)) / (sum(g_m)^2 f). Differential stages use twice
    as many devices for the same gain, doubling the PSD.

    Args:
        devices: (card, derivative set) of each device driving the output
        freqs: Frequencies in Hz, all > 0 and strictly increasing
        differential: Double the PSD for a differential pair
        temperature: Kelvin; defaults to ``TEMPERATURE_K``

    Raises:
        DomainError: On a non-positive or unordered frequency grid or zero total g_m
    """
    temperature = get_settings().TEMPERATURE_K if temperature is None else temperature
    if not temperature > 0.0:
        raise DomainError("Temperature must be positive", {"temperature": temperature})
    grid = [float(f) for f in freqs]
    if not grid or any(not (f > 0.0 and math.isfinite(f)) for f in grid):
        raise DomainError("Noise frequencies must be finite and positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("Noise frequencies must be strictly increasing")
    gm_total = math.fsum(d.gm[0] for _, d in devices)
    if gm_total == 0.0:
        raise DomainError("Total g_m is zero; noise cannot be referred to the input")

    four_kt = 4.0 * BOLTZMANN_J_PER_K * temperature
    gm_sq = gm_total * gm_total
    thermal = four_kt * math.fsum(p.gamma_noise * d.gm[0] for p, d in devices) / gm_sq
    # W*L in um^2 -> m^2
    flicker = math.fsum(
        d.gm[0] ** 2 * p.k_flicker / (p.cox_area * p.width * p.length * 1e-12) for p, d in devices
    ) / gm_sq
    factor = 2.0 if differential else 1.0
    psd = [factor * (thermal + flicker / f) for f in grid]
    return NoiseReport(
        freqs=grid,
        psd=psd,
        thermal_floor=factor * thermal,
        temperature=temperature,
        differential=differential,
    )
