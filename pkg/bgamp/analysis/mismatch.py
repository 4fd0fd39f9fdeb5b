"""
Monte Carlo device mismatch.

Each sample perturbs every device's threshold by a Gaussian with
sigma = A_vt / sqrt(W L) and its kprime by a relative Gaussian of fixed
sigma. Sample ``i`` draws from a Philox generator keyed by ``(i, seed)``,
so any sample can be reproduced on its own and the result does not
depend on evaluation order.
"""

import math
import time
from typing import Mapping, Optional, Sequence

import numpy as np

from bgamp.analysis.circuits import default_topology
from bgamp.analysis.dcsolve import solve_op
from bgamp.analysis.smallsig import common_mode_gain, differential_gain
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import ConvergenceError, DomainError, SingularCircuitError
from bgamp.core.logging import get_analysis_logger, log_performance_metric
from bgamp.models.circuit import Topology, TopologyKind
from bgamp.models.device import DeviceParams
from bgamp.schemas.reports import CmrrStats, MismatchSpec

log = get_analysis_logger("mismatch")


def sample_normals(seed: int, index: int, count: int) -> np.ndarray:
    """``count`` standard normals for sample ``index`` of a run seeded ``seed``."""
    if not 0 <= seed < 2**64 or index < 0:
        raise DomainError("Seed must be a 64-bit unsigned integer and index non-negative")
    generator = np.random.Generator(np.random.Philox(key=(index << 64) | seed))
    return generator.standard_normal(count)


def sample_one(
    params_set: Mapping[str, DeviceParams],
    spec: MismatchSpec,
    index: int,
) -> dict[str, DeviceParams]:
    """Perturbed copy of ``params_set`` for sample ``index``."""
    z = sample_normals(spec.seed, index, 2 * len(params_set))
    perturbed: dict[str, DeviceParams] = {}
    for k, (name, params) in enumerate(params_set.items()):
        sigma_vt = spec.avt_v_um / math.sqrt(params.width * params.length)
        perturbed[name] = params.evolve(
            vt0=params.vt0 + sigma_vt * float(z[2 * k]),
            kprime=params.kprime * (1.0 + spec.sigma_kprime_rel * float(z[2 * k + 1])),
        )
    return perturbed


def sample(params_set: Mapping[str, DeviceParams], spec: MismatchSpec) -> list[dict[str, DeviceParams]]:
    """``spec.samples`` independent perturbations of ``params_set``."""
    return [sample_one(params_set, spec, i) for i in range(spec.samples)]


def cmrr_db(
    topology: Topology,
    settings: Optional[Settings] = None,
    initial_guess: Optional[Mapping[str, float]] = None,
) -> float:
    """Oracle CMRR of a solved differential topology in dB."""
    op = solve_op(topology, initial_guess, settings=settings)
    a_dm = differential_gain(topology, op)
    a_cm = common_mode_gain(topology, op, settings=settings)
    if a_cm == 0.0:
        return math.inf
    return 20.0 * math.log10(abs(a_dm / a_cm))


def _statistics(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation, summed exactly around the smallest value."""
    if not values:
        return math.nan, math.nan
    pivot = min(values)
    n = len(values)
    mean = pivot + math.fsum(v - pivot for v in values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def cmrr_statistics(
    topology: Topology,
    spec: MismatchSpec,
    settings: Optional[Settings] = None,
) -> CmrrStats:
    """
    CMRR mean and spread of one differential topology under mismatch.

    Samples that fail to converge are excluded and counted; the run is
    flagged invalid when they exceed ``spec.max_failure_fraction``.

    Raises:
        DomainError: For a non-differential topology
        ConvergenceError: If the nominal circuit or every sample fails
    """
    if not topology.kind.differential:
        raise DomainError("CMRR Monte Carlo needs a differential topology", {"kind": topology.kind.value})
    settings = settings or get_settings()
    nominal = solve_op(topology, settings=settings)
    params_set = {d.name: d.params for d in topology.devices}

    values: list[float] = []
    failed = 0
    for i in range(spec.samples):
        variant = topology.with_params(sample_one(params_set, spec, i))
        try:
            values.append(cmrr_db(variant, settings, nominal.node_voltages))
        except (ConvergenceError, SingularCircuitError) as exc:
            failed += 1
            log.warning(f"Sample {i} of {topology.kind.value} failed: {exc}")

    if not values:
        raise ConvergenceError(
            f"All {spec.samples} Monte Carlo samples of {topology.kind.value} failed",
            details={"samples": spec.samples},
        )
    mean, std = _statistics(values)
    valid = failed <= spec.max_failure_fraction * spec.samples
    if not valid:
        log.warning(f"{failed}/{spec.samples} samples failed; run flagged invalid")
    elif failed:
        log.info(f"{failed}/{spec.samples} samples failed and were excluded")
    return CmrrStats(
        kind=topology.kind,
        length_um=topology.devices[0].params.length,
        mean_db=mean,
        std_db=std,
        samples=len(values),
        n_failed=failed,
        seed=spec.seed,
        valid=valid,
    )


def cmrr_monte_carlo(
    kind: TopologyKind,
    lengths: Sequence[float],
    spec: MismatchSpec,
    topology: Optional[Topology] = None,
    settings: Optional[Settings] = None,
) -> list[CmrrStats]:
    """
    CMRR statistics of a CMFB topology at each channel length (um).

    Args:
        kind: DIFF_SCMFB or DIFF_DCMFB
        lengths: Channel lengths applied to every device
        spec: Mismatch model and sample count
        topology: Template to resize; defaults to the default cards with feedback
        settings: Solver settings
    """
    if not kind.differential:
        raise DomainError("CMRR Monte Carlo needs a differential topology", {"kind": kind.value})
    base = topology if topology is not None else default_topology(kind)
    start = time.perf_counter()
    stats = [cmrr_statistics(base.with_length(L), spec, settings) for L in lengths]
    log_performance_metric(f"cmrr_monte_carlo[{kind.value}]", time.perf_counter() - start)
    return stats
