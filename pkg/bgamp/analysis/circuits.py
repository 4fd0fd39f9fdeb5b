"""
Amplifier topologies.

Builds the four named amplifiers from device cards and converts them to
netlists. Device names:

- CCS: M1 (N) and M2 (P) share the output ``out``; the input is ``in``.
- Differential: M1/M2 (N) and M3/M4 (P) form the two inverter halves
  driving ``outp``/``outn``. M5/M6 (N) sit between ``tailn`` and vss
  with gates on the outputs. In DIFF_DCMFB, M7/M8 (P) sit between vdd
  and ``tailp`` the same way; in DIFF_SCMFB the P inputs go straight
  to vdd.

With feedback, each input device's back gate is tied to its own half's
output; without it, to its source. CMFB back gates sit on their rails.
"""

from typing import Optional

from bgamp.analysis.device import default_nmos, default_pmos
from bgamp.core.config import get_settings
from bgamp.core.exceptions import TopologyError
from bgamp.models.circuit import GROUND, Circuit, DeviceBinding, Supplies, Topology, TopologyKind, VoltageSource
from bgamp.models.device import DeviceParams, Polarity
from bgamp.models.netlist import METERS_TO_UM, DeviceCard, Directive, ModelCard, Netlist, SourceCard

VDD_NODE = "vdd"
_SCMFB_NAMES = frozenset(f"M{k}" for k in range(1, 7))
_DCMFB_NAMES = frozenset(f"M{k}" for k in range(1, 9))


def _require(card: Optional[DeviceParams], polarity: Polarity, role: str) -> DeviceParams:
    if card is None:
        raise TopologyError(f"{role} card is required for this topology", {"role": role})
    if card.polarity is not polarity:
        raise TopologyError(
            f"{role} card must be {polarity.name}-type, got {card.polarity.name}-type",
            {"role": role, "polarity": card.polarity.value},
        )
    return card


def build_topology(
    kind: TopologyKind,
    n_params: DeviceParams,
    p_params: DeviceParams,
    cmfb_n: Optional[DeviceParams] = None,
    cmfb_p: Optional[DeviceParams] = None,
    supplies: Supplies = Supplies(),
    cmfb_ref: Optional[float] = None,
    feedback: bool = True,
) -> Topology:
    """
    Build a named amplifier topology.

    Args:
        kind: Topology to build
        n_params: N input card
        p_params: P input card
        cmfb_n: N tail card (differential kinds)
        cmfb_p: P tail card (DIFF_DCMFB)
        supplies: Supply rails
        cmfb_ref: Input common-mode bias; defaults to mid-supply
        feedback: Back gates of differential input devices on their outputs

    Returns:
        Topology ready for the DC solver

    Raises:
        TopologyError: On polarity mismatch or a missing tail card
    """
    n_params = _require(n_params, Polarity.N, "N input")
    p_params = _require(p_params, Polarity.P, "P input")
    ref = 0.5 * (supplies.vdd + supplies.vss) if cmfb_ref is None else cmfb_ref

    vss_node = GROUND if supplies.vss == 0.0 else "vss"
    sources = [VoltageSource(name="Vdd", positive=VDD_NODE, dc=supplies.vdd)]
    if vss_node != GROUND:
        sources.append(VoltageSource(name="Vss", positive=vss_node, dc=supplies.vss))

    if not kind.differential:
        fb = kind is TopologyKind.CCS_BG
        devices = [
            DeviceBinding(name="M1", drain="out", gate="in", source=vss_node,
                          backgate="out" if fb else vss_node, params=n_params),
            DeviceBinding(name="M2", drain="out", gate="in", source=VDD_NODE,
                          backgate="out" if fb else VDD_NODE, params=p_params),
        ]
        sources.append(VoltageSource(name="Vin", positive="in", dc=ref))
        return Topology(
            name=kind.value, kind=kind, devices=tuple(devices), sources=tuple(sources),
            supplies=supplies, cmfb_ref=ref, feedback=fb,
        )

    tail_n = _require(cmfb_n, Polarity.N, "N CMFB")
    double = kind is TopologyKind.DIFF_DCMFB
    tail_p = _require(cmfb_p, Polarity.P, "P CMFB") if double else None
    p_source = "tailp" if double else VDD_NODE

    devices = []
    for n_name, p_name, inp, out in (("M1", "M3", "inp", "outp"), ("M2", "M4", "inn", "outn")):
        devices.append(DeviceBinding(name=n_name, drain=out, gate=inp, source="tailn",
                                     backgate=out if feedback else "tailn", params=n_params))
        devices.append(DeviceBinding(name=p_name, drain=out, gate=inp, source=p_source,
                                     backgate=out if feedback else p_source, params=p_params))
    for name, out in (("M5", "outp"), ("M6", "outn")):
        devices.append(DeviceBinding(name=name, drain="tailn", gate=out, source=vss_node,
                                     backgate=vss_node, params=tail_n))
    if tail_p is not None:
        for name, out in (("M7", "outp"), ("M8", "outn")):
            devices.append(DeviceBinding(name=name, drain="tailp", gate=out, source=VDD_NODE,
                                         backgate=VDD_NODE, params=tail_p))
    devices.sort(key=lambda d: int(d.name[1:]))
    sources.append(VoltageSource(name="Vinp", positive="inp", dc=ref))
    sources.append(VoltageSource(name="Vinn", positive="inn", dc=ref))
    return Topology(
        name=kind.value, kind=kind, devices=tuple(devices), sources=tuple(sources),
        supplies=supplies, cmfb_ref=ref, feedback=feedback,
    )


def default_topology(
    kind: TopologyKind,
    length: Optional[float] = None,
    supplies: Optional[Supplies] = None,
    feedback: bool = True,
) -> Topology:
    """
    Topology built from the default cards, optionally at a channel length (um).

    Supplies default to ``VDD_V`` over ground.
    """
    if supplies is None:
        supplies = Supplies(vdd=get_settings().VDD_V)
    n_card, p_card = default_nmos(), default_pmos()
    if length is not None:
        n_card, p_card = n_card.with_geometry(length=length), p_card.with_geometry(length=length)
    return build_topology(
        kind, n_card, p_card, cmfb_n=n_card, cmfb_p=p_card, supplies=supplies, feedback=feedback
    )


def topology_to_netlist(topology: Topology) -> Netlist:
    """
    Express a topology as a netlist with one model card per device.

    Geometry moves to the M cards in metres; model cards keep the default
    geometry placeholder.
    """
    fields = type(topology.devices[0].params).model_fields if topology.devices else {}
    models = []
    devices = []
    for d in topology.devices:
        model_name = f"mod_{d.name.lower()}"
        card_params = d.params.evolve(width=fields["width"].default, length=fields["length"].default)
        models.append(ModelCard(name=model_name, params=card_params))
        devices.append(
            DeviceCard(
                name=d.name, drain=d.drain, gate=d.gate, source=d.source, backgate=d.backgate,
                model=model_name, width_m=d.params.width / METERS_TO_UM,
                length_m=d.params.length / METERS_TO_UM,
            )
        )
    sources = [
        SourceCard(name=v.name, positive=v.positive, negative=v.negative, dc=v.dc)
        for v in topology.sources
    ]
    return Netlist(
        models=tuple(models), devices=tuple(devices), sources=tuple(sources),
        directives=(Directive(kind="op"),),
    )


def recognize_topology(circuit: Circuit) -> Topology:
    """
    Identify a named amplifier in a generic circuit, e.g. one read from a netlist.

    CCS stages have M1 (N) and M2 (P) between ``in`` and ``out``;
    differential stages have M1..M6 on ``inp``/``inn``/``outp``/``outn``
    and DCMFB adds M7/M8; any other device set matches nothing. Supplies
    and the input bias come from the sources driving ``vdd``, ``vss`` and
    the input nodes.

    Raises:
        TopologyError: If the circuit matches no named amplifier
    """
    names = {d.name for d in circuit.devices}
    nodes = set(circuit.nodes)
    try:
        vdd = circuit.source_driving(VDD_NODE).dc
        vss = circuit.source_driving("vss").dc if "vss" in nodes else 0.0
        if {"M1", "M2"} == names and {"in", "out"} <= nodes:
            m1 = circuit.device("M1")
            feedback = m1.backgate == m1.drain
            kind = TopologyKind.CCS_BG if feedback else TopologyKind.CCS_OL
            ref = circuit.source_driving("in").dc
        elif {"inp", "inn", "outp", "outn"} <= nodes and names in (_SCMFB_NAMES, _DCMFB_NAMES):
            kind = TopologyKind.DIFF_DCMFB if names == _DCMFB_NAMES else TopologyKind.DIFF_SCMFB
            m1 = circuit.device("M1")
            feedback = m1.backgate == m1.drain
            ref = circuit.source_driving("inp").dc
        else:
            raise TopologyError(
                "Circuit matches no amplifier template (need M1/M2 on in/out, "
                "or M1..M6 on inp/inn/outp/outn)",
                {"devices": sorted(names)},
            )
    except KeyError as exc:
        raise TopologyError(f"Circuit has no source driving '{exc.args[0]}'") from None
    return Topology(
        name=circuit.name,
        kind=kind,
        devices=circuit.devices,
        sources=circuit.sources,
        conductances=circuit.conductances,
        supplies=Supplies(vdd=vdd, vss=vss),
        cmfb_ref=ref,
        feedback=feedback,
    )
