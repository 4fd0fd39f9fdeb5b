"""
Result tables behind the CLI.

Each function turns one amplifier into CSV rows. Figure-style tables
carry the closed-form ("calc") value next to the nodal-oracle or
fitted ("sim") value.
"""

import math
from typing import Optional, Sequence

from bgamp.analysis.circuits import build_topology
from bgamp.analysis.dcsolve import bias_match, rewire_feedback, solve_op
from bgamp.analysis.device import default_nmos, default_pmos, gm_over_id
from bgamp.analysis.distortion import measure_ccs
from bgamp.analysis.sizing import ccs_for_gm_over_id, size_for_gm_over_id
from bgamp.analysis.smallsig import (
    cm_gain,
    cmrr_ratio,
    common_mode_gain,
    derivative_sets,
    differential_gain,
    gain_ccs_bg,
    gain_ccs_ol,
    half_circuit,
    noise_input_referred,
)
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import DomainError
from bgamp.core.export import Cell
from bgamp.models.analysis import OperatingPoint, TransferCurve
from bgamp.models.circuit import Circuit, Supplies, Topology, TopologyKind
from bgamp.schemas.reports import CmrrStats

Row = tuple[Cell, ...]

OP_HEADER = ("element", "name", "voltage_v", "vgs_v", "vds_v", "vbs_v", "ids_a")
SWEEP_HEADER = ("input_v", "output_v")
GAIN_HEADER = (
    "L_um", "gm_over_id", "a_v_ol_calc", "a_v_ol_sim", "a_v_bg_calc", "a_v_bg_sim", "a_v_bg_asymptote",
)
NOISE_HEADER = ("L_um", "freq_hz", "psd_ol_v2_per_hz", "psd_bg_v2_per_hz", "thermal_floor_v2_per_hz")
DIST_HEADER = (
    "L_um", "gm_over_id", "ip3_ol_v", "ip3_bg_v", "ip3_ol_calc_v", "ip3_bg_calc_v",
    "enhancement_pred", "enhancement_measured",
)
CMRR_HEADER = (
    "L_um", "topology", "a_v_dm", "a_v_cm_calc", "a_v_cm_sim", "cmrr_calc_db", "cmrr_sim_db", "cmrr_ratio_pred",
)
MC_HEADER = ("topology", "length_um", "cmrr_mean_db", "cmrr_std_db", "n", "n_failed", "seed", "valid")

TEMPLATES = {
    "ccs": TopologyKind.CCS_BG,
    "ccs_bg": TopologyKind.CCS_BG,
    "ccs_ol": TopologyKind.CCS_OL,
    "scmfb": TopologyKind.DIFF_SCMFB,
    "dcmfb": TopologyKind.DIFF_DCMFB,
}

# decade grid, 1 Hz to 1 GHz
NOISE_FREQS = tuple(10.0**k for k in range(10))


def template_topology(
    name: str,
    length: Optional[float] = None,
    chi: Optional[float] = None,
    gmid: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> Topology:
    """
    Build a named template at an optional length, coupling and gm/Id.

    Raises:
        DomainError: For an unknown template name
    """
    try:
        kind = TEMPLATES[name.strip().lower()]
    except KeyError:
        raise DomainError(
            f"Unknown template '{name}'; expected one of {', '.join(sorted(TEMPLATES))}"
        ) from None
    settings = settings or get_settings()
    n_card, p_card = default_nmos(), default_pmos()
    if chi is not None:
        n_card, p_card = n_card.with_chi(chi), p_card.with_chi(chi)
    if length is not None:
        n_card, p_card = n_card.with_geometry(length=length), p_card.with_geometry(length=length)

    if gmid is not None and not kind.differential:
        return ccs_for_gm_over_id(gmid, n_card, p_card, feedback=kind is TopologyKind.CCS_BG)
    topology = build_topology(
        kind, n_card, p_card, cmfb_n=n_card, cmfb_p=p_card, supplies=Supplies(vdd=settings.VDD_V)
    )
    if gmid is not None:
        topology = size_for_gm_over_id(topology, gmid, settings=settings)
    return topology


def _length(topology: Circuit) -> float:
    return topology.devices[0].params.length


def op_rows(circuit: Circuit, op: OperatingPoint) -> list[Row]:
    rows: list[Row] = [("node", name, v, None, None, None, None) for name, v in op.node_voltages.items()]
    for d in circuit.devices:
        b = op.biases[d.name]
        rows.append(("device", d.name, None, b.vgs, b.vds, b.vbs, b.ids))
    return rows


def sweep_rows(curve: TransferCurve) -> list[Row]:
    return [(x, y) for x, y in curve.rows()]


def gain_row(topology: Topology, settings: Optional[Settings] = None) -> Row:
    """Open-loop and back-gate gain of a stage, closed form and oracle."""
    open_loop = rewire_feedback(topology, False)
    backgate = rewire_feedback(topology, True)
    matched = bias_match(open_loop, backgate, settings=settings)
    dsets = derivative_sets(open_loop, matched.open_loop, order=1)
    half = [dsets[n] for n in half_circuit(open_loop)]
    bg = gain_ccs_bg(half)
    m1 = open_loop.device("M1")
    return (
        _length(topology),
        gm_over_id(m1.params, matched.open_loop.biases["M1"]),
        gain_ccs_ol(half),
        differential_gain(open_loop, matched.open_loop),
        bg.exact,
        differential_gain(backgate, matched.backgate, matched.backgate_circuit),
        bg.asymptote,
    )


def noise_rows(
    topology: Topology,
    freqs: Sequence[float] = NOISE_FREQS,
    settings: Optional[Settings] = None,
) -> list[Row]:
    """Input-referred PSD with and without feedback at bias-matched points."""
    settings = settings or get_settings()
    open_loop = rewire_feedback(topology, False)
    matched = bias_match(open_loop, rewire_feedback(topology, True), settings=settings)
    names = half_circuit(open_loop)
    differential = topology.kind.differential
    reports = []
    for circuit, op in ((open_loop, matched.open_loop), (matched.backgate_circuit, matched.backgate)):
        dsets = derivative_sets(circuit, op, order=1)
        devices = [(circuit.device(n).params, dsets[n]) for n in names]
        reports.append(
            noise_input_referred(devices, freqs, differential, settings.TEMPERATURE_K)
        )
    ol, bg = reports
    return [
        (_length(topology), f, p_ol, p_bg, ol.thermal_floor)
        for f, p_ol, p_bg in zip(ol.freqs, ol.psd, bg.psd)
    ]


def dist_row(topology: Topology, settings: Optional[Settings] = None) -> Row:
    point = measure_ccs(rewire_feedback(topology, False), settings=settings)
    return tuple(point)


def cmrr_row(topology: Topology, settings: Optional[Settings] = None) -> Row:
    """Differential and common-mode gains with closed-form and oracle CMRR."""
    if not topology.kind.differential:
        raise DomainError("CMRR needs a differential template", {"kind": topology.kind.value})
    op = solve_op(topology, settings=settings)
    dsets = derivative_sets(topology, op, order=1)
    a_dm = differential_gain(topology, op)
    cm_calc = cm_gain(topology.kind, dsets)
    cm_sim = common_mode_gain(topology, op, settings=settings)

    def db(a_cm: float) -> float:
        return math.inf if a_cm == 0.0 else 20.0 * math.log10(abs(a_dm / a_cm))

    ratio = cmrr_ratio(dsets) if topology.kind is TopologyKind.DIFF_DCMFB else None
    return (_length(topology), topology.kind.value, a_dm, cm_calc, cm_sim, db(cm_calc), db(cm_sim), ratio)


def mc_row(stats: CmrrStats) -> Row:
    return (
        stats.kind.value, stats.length_um, stats.mean_db, stats.std_db,
        stats.samples, stats.n_failed, stats.seed, stats.valid,
    )
