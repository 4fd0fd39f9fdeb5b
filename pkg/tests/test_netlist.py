"""
Tests for netlist parsing and emission.

Diagnostics must carry the exact line and column of the offending token;
emitted netlists must parse back to the same structure.
"""

import numpy as np
import pytest

from bgamp.analysis.circuits import default_topology, topology_to_netlist
from bgamp.analysis.dcsolve import solve_op
from bgamp.analysis.netlist import emit_netlist, parse_netlist, parse_value
from bgamp.core.exceptions import EXIT_USAGE, NetlistError, NetlistSyntaxError, UndefinedModelError
from bgamp.models.circuit import TopologyKind
from bgamp.models.device import Polarity

MODELS = (
    ".model nch nfet vt0=0.8 kprime=300u n=1.2 lambda0=0.05 chi=0.2\n"
    ".model pch pfet vt0=0.8 kprime=300u n=1.2 lambda0=0.05 chi=0.2\n"
)

INVERTER = MODELS + (
    "M1 out in 0 out nch W=10u L=0.15u\n"
    "M2 out in vdd out pch W=10u L=0.15u\n"
    "Vdd vdd 0 DC 1.8\n"
    "Vin in 0 0.9\n"
    ".op\n"
    ".dc Vin 0.8 1.0 21\n"
    ".end\n"
)

# (text, line, column, exception type)
DIAGNOSTICS = [
    # back gate left out: the model name sits in the back-gate slot
    (MODELS + "M1 out in 0 nch W=10u L=0.15u\n", 3, 13, NetlistSyntaxError),
    (MODELS + "M1 out in 0\n", 3, 13, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out W=10u L=1u\n", 3, 17, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=10u\n", 3, 27, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=10u L=0\n", 3, 29, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=10x L=1u\n", 3, 23, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=10u L=1u X=3\n", 3, 32, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=10u W=1u L=1u\n", 3, 27, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch L=1u W=\n", 3, 28, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch extra W=1u L=1u\n", 3, 21, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out xch W=1u L=1u\n", 3, 17, UndefinedModelError),
    (MODELS + "M1 o-ut in 0 out nch W=1u L=1u\n", 3, 4, NetlistSyntaxError),
    (MODELS + "M1 out in 0 out nch W=1u L=1u\nm1 a b 0 0 nch W=1u L=1u\n", 4, 1, NetlistSyntaxError),
    (MODELS + "R1 a b 1k\n", 3, 1, NetlistSyntaxError),
    (MODELS + "  X1 a b\n", 3, 3, NetlistSyntaxError),
    (MODELS + "1M a b\n", 3, 1, NetlistSyntaxError),
    ("Vdd vdd\n", 1, 9, NetlistSyntaxError),
    ("Vdd\n", 1, 5, NetlistSyntaxError),
    ("Vdd vdd 0 DC\n", 1, 14, NetlistSyntaxError),
    ("Vdd vdd 0 DC 1.8 2.0\n", 1, 18, NetlistSyntaxError),
    ("Vdd vdd 0 abc\n", 1, 11, NetlistSyntaxError),
    ("Vdd vdd vdd 1\n", 1, 9, NetlistSyntaxError),
    ("Vdd vdd 0 dc=1\n", 1, 11, NetlistSyntaxError),
    ("Vdd vdd 0 1e999\n", 1, 11, NetlistSyntaxError),
    (".model\n", 1, 8, NetlistSyntaxError),
    (".model nch\n", 1, 12, NetlistSyntaxError),
    (".model nch bjt vt0=1\n", 1, 12, NetlistSyntaxError),
    (".model 9ch nfet vt0=1 kprime=1u\n", 1, 8, NetlistSyntaxError),
    (".model nch nfet kprime=1u\n", 1, 27, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u foo=3\n", 1, 35, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u vt0=0.4\n", 1, 35, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u chi=1.5\n", 1, 35, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=0\n", 1, 25, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u n=0.5\n", 1, 35, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u stray\n", 1, 35, NetlistSyntaxError),
    (".model nch nfet vt0=0.5 kprime=1u\n.model NCH nfet vt0=0.5 kprime=1u\n", 2, 8, NetlistSyntaxError),
    (".op now\n", 1, 5, NetlistSyntaxError),
    (".tran 1n 10n\n", 1, 1, NetlistSyntaxError),
    (".end later\n", 1, 6, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin 0 1\n", 2, 13, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin 0 1 2.5\n", 2, 13, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin 0 1 1\n", 2, 13, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin 1 1 5\n", 2, 11, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin 0 1 5 6\n", 2, 15, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vx 0 1 5\n", 2, 1, NetlistSyntaxError),
    ("Vin in 0 1\n.dc Vin x 1 5\n", 2, 9, NetlistSyntaxError),
    ("* comment\n\nVin in 0 1\n  .bogus\n", 4, 3, NetlistSyntaxError),
]


@pytest.mark.parametrize("text,line,column,error", DIAGNOSTICS)
def test_diagnostic_positions(text, line, column, error):
    """Test that each malformed card is reported at its exact position."""
    with pytest.raises(error) as excinfo:
        parse_netlist(text)
    assert (excinfo.value.line, excinfo.value.column) == (line, column)
    assert excinfo.value.exit_code == EXIT_USAGE
    assert str(excinfo.value).startswith(f"line {line}, column {column}:")


def test_missing_backgate_names_the_terminal():
    """Test the dedicated message for a three-terminal card."""
    with pytest.raises(NetlistSyntaxError, match="back-gate terminal missing") as excinfo:
        parse_netlist(MODELS + "M1 out in 0 nch W=10u L=0.15u\n")
    assert "<backgate>" in excinfo.value.expected


def test_undefined_model_lists_known_models():
    """Test that an unknown model reference lists the defined ones."""
    with pytest.raises(UndefinedModelError) as excinfo:
        parse_netlist(MODELS + "M1 out in 0 out xch W=1u L=1u\n")
    assert excinfo.value.expected == frozenset({"nch", "pch"})


def test_parse_inverter():
    """Test a complete netlist."""
    netlist = parse_netlist(INVERTER)
    assert [m.name for m in netlist.models] == ["nch", "pch"]
    assert netlist.model_card("PCH").params.polarity is Polarity.P
    m1 = netlist.devices[0]
    assert (m1.drain, m1.gate, m1.source, m1.backgate, m1.model) == ("out", "in", "0", "out", "nch")
    assert m1.width_m == pytest.approx(10e-6, rel=1e-12)
    assert m1.length_m == pytest.approx(0.15e-6, rel=1e-12)
    assert [v.dc for v in netlist.sources] == [1.8, 0.9]
    op, dc = netlist.directives
    assert op.kind == "op"
    assert (dc.source, dc.start, dc.stop, dc.points) == ("Vin", 0.8, 1.0, 21)
    assert netlist.warnings == ()


def test_case_insensitive_keywords():
    """Test that keywords, element letters and suffixes ignore case."""
    text = (
        ".MODEL NCH NFET VT0=0.8 KPRIME=300U\n"
        "m1 d g 0 0 nch w=1U l=1U\n"
        "vd d 0 dc 1\n"
        "vg g 0 1\n"
        ".OP\n"
        ".END\n"
    )
    netlist = parse_netlist(text)
    assert netlist.devices[0].name == "m1"
    assert netlist.model_card("nch").params.kprime == pytest.approx(300e-6, rel=1e-12)


def test_lines_after_end_are_ignored():
    """Test that parsing stops at .end."""
    netlist = parse_netlist("Vd d 0 1\n.end\nthis is not a card\n")
    assert len(netlist.sources) == 1


def test_dangling_node_warning():
    """Test that a node with a single connection is reported, not rejected."""
    netlist = parse_netlist(MODELS + "M1 out in 0 0 nch W=1u L=1u\nVin in 0 0.9\nVx x 0 1\n")
    assert any("'out'" in w for w in netlist.warnings)
    assert any("'x'" in w for w in netlist.warnings)


@pytest.mark.parametrize(
    "text,value",
    [
        ("1", 1.0),
        ("0.15u", 0.15e-6),
        ("10U", 10e-6),
        ("3MEG", 3e6),
        ("2k", 2e3),
        ("5m", 5e-3),
        ("1e-25", 1e-25),
        ("1.5e-3u", 1.5e-9),
        ("4n", 4e-9),
        ("7p", 7e-12),
        ("2f", 2e-15),
        ("1g", 1e9),
        ("1t", 1e12),
        ("1mil", 25.4e-6),
        ("-0.5", -0.5),
        (".5", 0.5),
    ],
)
def test_parse_value_suffixes(text, value):
    """Test engineering suffixes."""
    assert parse_value(text) == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("text", ["", "u", "1x", "1.2.3", "abc", "1e", "--1", "nan", "inf"])
def test_parse_value_rejects(text):
    """Test that malformed numbers raise a positioned syntax error."""
    with pytest.raises(NetlistSyntaxError):
        parse_value(text, 4, 9)


@pytest.mark.parametrize("kind", list(TopologyKind))
def test_emit_parse_round_trip(kind):
    """Test that emitted topology netlists parse back to the same structure."""
    netlist = topology_to_netlist(default_topology(kind))
    again = parse_netlist(emit_netlist(netlist))
    assert again.structure() == netlist.structure()
    assert parse_netlist(emit_netlist(again)).structure() == netlist.structure()


def test_emit_keeps_non_default_parameters():
    """Test that non-default model fields survive emission."""
    text = ".model nch nfet vt0=0.5 kprime=1e-4 chi=0.35 vtoff=0.01\nVd d 0 1\n"
    card = parse_netlist(emit_netlist(parse_netlist(text))).model_card("nch")
    assert card.params.chi_mag == 0.35
    assert card.params.vt_offset == 0.01


@pytest.mark.parametrize("kind", list(TopologyKind))
def test_netlist_circuit_matches_template(kind):
    """Test that a template and its netlist solve to the same node voltages."""
    topology = default_topology(kind)
    from_netlist = parse_netlist(emit_netlist(topology_to_netlist(topology))).to_circuit()
    a, b = solve_op(topology), solve_op(from_netlist)
    assert a.node_voltages.keys() == b.node_voltages.keys()
    for node, v in a.node_voltages.items():
        assert b.node_voltages[node] == pytest.approx(v, abs=1e-6)


def test_parser_is_total_on_garbage():
    """Test that arbitrary token soup either parses or raises a positioned error."""
    rng = np.random.default_rng(3)
    vocabulary = [
        "M1", "V1", "m2", ".model", ".dc", ".op", ".end", "nch", "nfet", "pfet", "out", "in",
        "0", "W=1u", "L=", "=", "vt0=0.5", "kprime=1u", "chi=2", "1e999", "DC", "1.8", "*",
        "x-y", "3", "-1", ".5u", "R1", "", "  ",
    ]
    for _ in range(2000):
        lines = [
            " ".join(rng.choice(vocabulary, size=int(rng.integers(0, 8))))
            for _ in range(int(rng.integers(1, 5)))
        ]
        try:
            parse_netlist("\n".join(lines))
        except NetlistError as exc:
            assert exc.line >= 1
            assert exc.column >= 1
