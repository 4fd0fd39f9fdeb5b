"""
Tests for the DC operating-point solver, sweeps, bias matching and sizing.
"""

import numpy as np
import pytest
from scipy.stats import linregress

from bgamp.analysis.circuits import build_topology, default_topology
from bgamp.analysis.dcsolve import (
    bias_match,
    evaluate_op,
    monotone_span,
    rewire_feedback,
    solve_op,
    sweep_dc,
    trip_point,
)
from bgamp.analysis.device import default_nmos, default_pmos, gm_over_id
from bgamp.analysis.sizing import ccs_for_gm_over_id, input_gm_over_id, size_for_gm_over_id
from bgamp.analysis.smallsig import derivative_sets, gain_ccs_bg, gain_ccs_ol
from bgamp.core.config import Settings
from bgamp.core.exceptions import BiasMatchError, ConvergenceError, DomainError, TopologyError
from bgamp.models.circuit import Circuit, DeviceBinding, Supplies, TopologyKind, VoltageSource


@pytest.mark.parametrize("kind", [TopologyKind.CCS_OL, TopologyKind.CCS_BG])
def test_ccs_sits_at_midrail(kind):
    """Test that a mirrored CCS trips at mid-supply."""
    op = solve_op(default_topology(kind))
    assert op.converged
    assert op.node_voltages["out"] == pytest.approx(0.9, abs=1e-9)
    assert op.residual <= 1e-12
    assert op.biases["M1"].ids == pytest.approx(-op.biases["M2"].ids, rel=1e-9)


@pytest.mark.parametrize("kind", list(TopologyKind))
def test_solution_is_deterministic(kind):
    """Test that repeated solves give identical results."""
    topology = default_topology(kind, length=1.0)
    assert solve_op(topology) == solve_op(topology)


@pytest.mark.parametrize("kind", [TopologyKind.DIFF_SCMFB, TopologyKind.DIFF_DCMFB])
def test_differential_stage_is_symmetric(kind):
    """Test that both halves of a balanced differential stage agree."""
    op = solve_op(default_topology(kind, length=1.0))
    assert op.node_voltages["outp"] == pytest.approx(op.node_voltages["outn"], abs=1e-9)
    assert op.biases["M1"].ids == pytest.approx(op.biases["M2"].ids, rel=1e-9)
    assert op.residual <= 1e-12


def test_initial_guess_does_not_change_solution(ccs_ol):
    """Test convergence to the same point from a distant starting guess."""
    reference = solve_op(ccs_ol)
    other = solve_op(ccs_ol, {"out": 1.7, "in": 0.9, "vdd": 1.8})
    assert other.node_voltages["out"] == pytest.approx(reference.node_voltages["out"], abs=1e-9)


def test_circuit_without_ground_or_source(nmos):
    """Test structural checks before solving."""
    floating = Circuit(sources=(VoltageSource(name="V1", positive="a", negative="b", dc=1.0),))
    with pytest.raises(TopologyError):
        solve_op(floating)
    no_source = Circuit(
        devices=(DeviceBinding(name="M1", drain="d", gate="g", source="0", backgate="0", params=nmos),)
    )
    with pytest.raises(TopologyError):
        solve_op(no_source)


def test_convergence_failure_is_reported(ccs_ol):
    """Test that an iteration budget too small to converge raises ConvergenceError."""
    settings = Settings(NEWTON_MAX_ITERATIONS=1, SOURCE_STEPS=1, NEWTON_MAX_STEP_V=1e-6)
    with pytest.raises(ConvergenceError):
        solve_op(ccs_ol, {"out": 0.0}, settings=settings)


def test_evaluate_op_reports_kcl(ccs_ol):
    """Test that a non-solution is flagged as not converged."""
    op = solve_op(ccs_ol)
    assert evaluate_op(ccs_ol, op.node_voltages, op.branch_currents).converged
    shifted = dict(op.node_voltages, out=1.0)
    assert not evaluate_op(ccs_ol, shifted).converged


@pytest.mark.parametrize("kind", [TopologyKind.CCS_OL, TopologyKind.CCS_BG])
def test_sweep_slope_matches_small_signal_gain(kind):
    """Test the central-difference slope of the transfer curve at midrail."""
    topology = default_topology(kind)
    curve = sweep_dc(topology, "in", 0.899, 0.901, 3, "out")
    slope = (curve.output_values[2] - curve.output_values[0]) / 0.002
    op = solve_op(topology)
    dsets = derivative_sets(topology, op, order=1)
    half = [dsets["M1"], dsets["M2"]]
    gain = gain_ccs_ol(half) if kind is TopologyKind.CCS_OL else gain_ccs_bg(half).exact
    assert slope == pytest.approx(gain, rel=1e-3)


def test_feedback_flattens_transfer_curve(ccs_ol, ccs_bg):
    """Test that the back-gate stage has the smaller peak slope."""
    peaks = []
    for topology in (ccs_ol, ccs_bg):
        curve = sweep_dc(topology, "in", 0.85, 0.95, 101, "out")
        peaks.append(np.max(np.abs(np.diff(curve.output_values) / np.diff(curve.input_values))))
    assert peaks[1] < peaks[0]


def test_sweep_refinement_reproduces_shared_points(ccs_bg):
    """Test that a finer grid reproduces the coarse grid's samples."""
    coarse = sweep_dc(ccs_bg, "Vin", 0.8, 1.0, 11, "out")
    fine = sweep_dc(ccs_bg, "Vin", 0.8, 1.0, 21, "out")
    for k, value in enumerate(coarse.output_values):
        assert fine.output_values[2 * k] == pytest.approx(value, abs=1e-9)


def test_inverting_curve_is_monotone(ccs_bg):
    """Test that the whole curve is one decreasing run."""
    curve = sweep_dc(ccs_bg, "in", 0.8, 1.0, 41, "out")
    assert curve.monotone_span == (0, 40)
    assert all(b < a for a, b in zip(curve.output_values, curve.output_values[1:]))


def test_differential_sweep_is_odd(dcmfb):
    """Test the odd symmetry of a balanced differential transfer curve."""
    curve = sweep_dc(dcmfb, ("inp", "inn"), -0.05, 0.05, 21, ("outp", "outn"))
    y = curve.output_values
    for k in range(21):
        assert y[k] == pytest.approx(-y[20 - k], abs=1e-9)
    assert y[10] == pytest.approx(0.0, abs=1e-9)


def test_sweep_rejects_bad_ranges(ccs_ol):
    """Test sweep argument validation."""
    with pytest.raises(DomainError):
        sweep_dc(ccs_ol, "in", 0.9, 0.9, 11, "out")
    with pytest.raises(DomainError):
        sweep_dc(ccs_ol, "in", 0.8, 1.0, 1, "out")
    with pytest.raises(DomainError):
        sweep_dc(ccs_ol, "in", 0.8, 1.0, 11, "nowhere")
    with pytest.raises(DomainError):
        sweep_dc(ccs_ol, "nowhere", 0.8, 1.0, 11, "out")


def test_monotone_span():
    """Test the longest strictly monotone run."""
    assert monotone_span([0.0, 1.0, 2.0, 1.0]) == (0, 2)
    assert monotone_span([3.0, 2.0, 2.0, 1.0, 0.0, -1.0]) == (2, 5)
    assert monotone_span([1.0]) == (0, 0)


def test_trip_point(ccs_ol):
    """Test the input at which the output crosses mid-supply."""
    assert trip_point(ccs_ol, "in", "out", 0.9, 0.85, 0.95) == pytest.approx(0.9, abs=1e-9)
    with pytest.raises(DomainError):
        trip_point(ccs_ol, "in", "out", 10.0, 0.85, 0.95)


def test_rewire_feedback(ccs_ol, dcmfb):
    """Test moving back gates between outputs and sources."""
    bg = rewire_feedback(ccs_ol, True)
    assert bg.kind is TopologyKind.CCS_BG
    assert all(d.backgate == "out" for d in bg.devices)
    ol = rewire_feedback(dcmfb, False)
    assert ol.kind is TopologyKind.DIFF_DCMFB and not ol.feedback
    assert ol.device("M1").backgate == "tailn"
    assert ol.device("M5").backgate == dcmfb.device("M5").backgate


def test_bias_match_equalizes_operating_points(ccs_ol):
    """Test that matched circuits share node voltages, currents and derivatives."""
    matched = bias_match(ccs_ol)
    assert matched.offsets["M1"] == pytest.approx(0.18, rel=1e-9)
    assert matched.offsets["M2"] == pytest.approx(0.18, rel=1e-9)
    assert matched.backgate.converged
    assert matched.backgate.node_voltages == matched.open_loop.node_voltages
    for name in ("M1", "M2"):
        assert matched.backgate.biases[name].ids == pytest.approx(
            matched.open_loop.biases[name].ids, rel=1e-12
        )
    bg = derivative_sets(matched.backgate_circuit, matched.backgate, order=1)
    ol = derivative_sets(ccs_ol, matched.open_loop, order=1)
    assert bg["M1"].gm[0] == pytest.approx(ol["M1"].gm[0], rel=1e-12)


def test_bias_match_without_coupling_needs_no_offsets():
    """Test that chi = 0 gives exactly zero offsets."""
    n_card, p_card = default_nmos(chi_mag=0.0), default_pmos(chi_mag=0.0)
    matched = bias_match(build_topology(TopologyKind.CCS_OL, n_card, p_card))
    assert matched.offsets == {"M1": 0.0, "M2": 0.0}


def test_bias_match_window(ccs_ol):
    """Test that an offset outside the window is refused."""
    with pytest.raises(BiasMatchError):
        bias_match(ccs_ol, settings=Settings(BIAS_MATCH_WINDOW_V=0.1))


def test_dcmfb_bias_match(dcmfb):
    """Test bias matching of a differential stage."""
    open_loop = rewire_feedback(dcmfb, False)
    matched = bias_match(open_loop, dcmfb)
    assert matched.backgate.converged
    assert matched.offsets["M5"] == 0.0
    assert matched.offsets["M1"] == pytest.approx(matched.offsets["M2"], abs=1e-12)


def test_cmfb_width_scaling_is_linear_without_clm():
    """Test that doubling every CMFB width doubles the current when lambda = 0."""
    n_card, p_card = default_nmos(lambda0=0.0), default_pmos(lambda0=0.0)
    topology = build_topology(TopologyKind.DIFF_DCMFB, n_card, p_card, cmfb_n=n_card, cmfb_p=p_card)
    base = solve_op(topology).biases["M1"].ids
    doubled = solve_op(topology.scale_widths(["M5", "M6", "M7", "M8"], 2.0)).biases["M1"].ids
    assert doubled == pytest.approx(2.0 * base, rel=1e-9)


def test_weak_inversion_single_sided_sizing():
    """Test the square-root current law when only the N CMFB devices are scaled."""
    n_card, p_card = default_nmos(lambda0=0.0), default_pmos(lambda0=0.0)
    topology = build_topology(
        TopologyKind.DIFF_DCMFB, n_card, p_card, cmfb_n=n_card, cmfb_p=p_card,
        supplies=Supplies(vdd=0.8),
    )
    scales = [0.5, 1.0, 2.0, 4.0, 8.0]
    currents = [solve_op(topology.scale_widths(["M5", "M6"], k)).biases["M1"].ids for k in scales]
    fit = linregress(np.log(scales), np.log(currents))
    assert fit.slope == pytest.approx(0.5, abs=0.02)


def test_ccs_sizing_hits_target(nmos, pmos):
    """Test that a CCS biased for a gm/Id target reaches it."""
    for target in (8.0, 15.0, 25.0):
        topology = ccs_for_gm_over_id(target, nmos, pmos)
        op = solve_op(topology)
        assert op.node_voltages["out"] == pytest.approx(0.5 * topology.supplies.vdd, abs=1e-6)
        assert gm_over_id(nmos, op.biases["M1"]) == pytest.approx(target, rel=1e-3)


@pytest.mark.slow
def test_differential_sizing_hits_target(dcmfb):
    """Test CMFB width scaling for a gm/Id target."""
    sized = size_for_gm_over_id(dcmfb, 18.0)
    assert input_gm_over_id(sized) == pytest.approx(18.0, rel=1e-3)
    with pytest.raises(DomainError):
        size_for_gm_over_id(default_topology(TopologyKind.CCS_OL), 18.0)
