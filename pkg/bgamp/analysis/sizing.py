"""
gm/Id biasing of the amplifier templates.

CCS stages are biased directly: each card's gate-source voltage follows
from ``gm_over_id_bias`` and the supply is their sum. Differential stages
set their current through the CMFB devices, so their widths are scaled
by bisection until the input pair reaches the target.
"""

import math
from typing import Optional

from bgamp.analysis.circuits import build_topology
from bgamp.analysis.dcsolve import solve_op
from bgamp.analysis.device import gm_over_id, gm_over_id_bias
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import DomainError
from bgamp.core.logging import get_analysis_logger
from bgamp.models.circuit import Supplies, Topology, TopologyKind
from bgamp.models.device import DeviceParams

log = get_analysis_logger("sizing")

# gm/Id agreement demanded of the sized circuit
GM_OVER_ID_RTOL = 1e-3

CMFB_DEVICES = ("M5", "M6", "M7", "M8")


def ccs_for_gm_over_id(
    target: float,
    n_params: DeviceParams,
    p_params: DeviceParams,
    feedback: bool = False,
) -> Topology:
    """
    CCS stage whose N and P devices both sit at gm/Id = ``target``.

    The input bias is the N gate-source voltage and the supply is the sum
    of both gate-source magnitudes.

    Raises:
        DomainError: If the target is unreachable for either card
    """
    vgs_n = gm_over_id_bias(n_params, target, vds=0.0)
    vgs_p = gm_over_id_bias(p_params, target, vds=0.0)
    vdd = vgs_n - vgs_p
    if not vdd > 0.0:
        raise DomainError(
            f"gm/Id {target:.4g} S/A needs a non-positive supply ({vdd:.4g} V)",
            {"target": target, "vdd": vdd},
        )
    kind = TopologyKind.CCS_BG if feedback else TopologyKind.CCS_OL
    return build_topology(kind, n_params, p_params, supplies=Supplies(vdd=vdd), cmfb_ref=vgs_n)


def input_gm_over_id(topology: Topology, settings: Optional[Settings] = None) -> float:
    """gm/Id of M1 at the solved operating point."""
    op = solve_op(topology, settings=settings)
    m1 = topology.device("M1")
    return gm_over_id(m1.params, op.biases["M1"])


def size_for_gm_over_id(
    topology: Topology,
    target: float,
    lo: float = 1e-3,
    hi: float = 1e3,
    settings: Optional[Settings] = None,
) -> Topology:
    """
    Scale the CMFB widths of a differential stage to reach a gm/Id target.

    Wider CMFB devices carry more current, which lowers the input pair's
    gm/Id, so the scale is bisected in log space until M1 lands within
    0.1% of ``target``.

    Args:
        topology: DIFF_SCMFB or DIFF_DCMFB stage
        target: gm/Id of M1 in S/A
        lo: Smallest width scale tried
        hi: Largest width scale tried

    Returns:
        Copy of ``topology`` with scaled CMFB widths

    Raises:
        DomainError: For a CCS topology or a target outside the bracket
    """
    if not topology.kind.differential:
        raise DomainError("CMFB sizing needs a differential topology", {"kind": topology.kind.value})
    settings = settings or get_settings()
    names = [d.name for d in topology.devices if d.name in CMFB_DEVICES]

    def excess(log_scale: float) -> tuple[Topology, float]:
        sized = topology.scale_widths(names, math.exp(log_scale))
        return sized, input_gm_over_id(sized, settings) - target

    a, b = math.log(lo), math.log(hi)
    _, f_a = excess(a)
    _, f_b = excess(b)
    # gm/Id falls as the scale grows
    if not (f_a >= 0.0 >= f_b):
        raise DomainError(
            f"gm/Id {target:.4g} S/A is outside the reach of CMFB scales [{lo:g}, {hi:g}] "
            f"({f_a + target:.4g} to {f_b + target:.4g} S/A)",
            {"target": target},
        )
    for _ in range(200):
        mid = 0.5 * (a + b)
        sized, f_mid = excess(mid)
        if abs(f_mid) <= GM_OVER_ID_RTOL * target:
            log.debug(f"CMFB width scale {math.exp(mid):.6g} reaches gm/Id {target:.4g}")
            return sized
        if f_mid > 0.0:
            a = mid
        else:
            b = mid
    raise DomainError(f"CMFB sizing did not reach gm/Id {target:.4g} S/A", {"target": target})
