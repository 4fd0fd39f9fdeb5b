"""
DC operating-point solver.

Modified nodal analysis with one branch current per voltage source,
solved by damped Newton iteration: node-voltage updates are scaled
uniformly so no node moves more than ``NEWTON_MAX_STEP_V`` per
iteration. When Newton fails, sources are ramped from zero in
``SOURCE_STEPS`` steps, each solved from the previous one.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from bgamp.analysis.device import evaluate, make_bias
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import BiasMatchError, ConvergenceError, DomainError, TopologyError
from bgamp.core.logging import get_analysis_logger
from bgamp.models.analysis import BiasMatch, OperatingPoint, TransferCurve
from bgamp.models.circuit import GROUND, Circuit, DeviceBinding, Topology, TopologyKind, VoltageSource
from bgamp.models.netlist import Netlist

log = get_analysis_logger("dcsolve")

CircuitLike = Union[Circuit, Netlist]
NodeSpec = Union[str, tuple[str, str]]


def _as_circuit(circuit: CircuitLike) -> Circuit:
    return circuit.to_circuit() if isinstance(circuit, Netlist) else circuit


def terminal_voltages(binding: DeviceBinding, voltages: Mapping[str, float]) -> tuple[float, float, float]:
    """(vgs, vds, vbs) of a device from node voltages."""
    vs = voltages.get(binding.source, 0.0)
    return (
        voltages.get(binding.gate, 0.0) - vs,
        voltages.get(binding.drain, 0.0) - vs,
        voltages.get(binding.backgate, 0.0) - vs,
    )


@dataclass
class _Compiled:
    """Index form of a circuit for repeated assembly."""

    circuit: Circuit
    nodes: list[str]
    index: dict[str, int]
    device_idx: list[tuple[int, int, int, int]] = field(default_factory=list)
    source_idx: list[tuple[int, int]] = field(default_factory=list)
    source_dc: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def build(cls, circuit: Circuit) -> "_Compiled":
        if not circuit.sources:
            raise TopologyError("Circuit has no voltage source", {"circuit": circuit.name})
        nodes = circuit.nodes
        referenced = {n for d in circuit.devices for n in d.terminals}
        referenced |= {n for v in circuit.sources for n in (v.positive, v.negative)}
        referenced |= {n for g in circuit.conductances for n in (g.node_a, g.node_b)}
        if GROUND not in referenced:
            raise TopologyError("Circuit has no ground reference", {"circuit": circuit.name})
        index = {name: i for i, name in enumerate(nodes)}
        index[GROUND] = -1
        compiled = cls(circuit=circuit, nodes=nodes, index=index)
        compiled.device_idx = [
            (index[d.drain], index[d.gate], index[d.source], index[d.backgate]) for d in circuit.devices
        ]
        compiled.source_idx = [(index[v.positive], index[v.negative]) for v in circuit.sources]
        compiled.source_dc = np.array([v.dc for v in circuit.sources], dtype=float)
        return compiled

    @property
    def size(self) -> int:
        return len(self.nodes) + len(self.circuit.sources)

    def initial_guess(self, guess: Optional[Mapping[str, float]] = None) -> np.ndarray:
        x = np.zeros(self.size)
        values = [0.0, *self.source_dc.tolist()]
        mid = 0.5 * (min(values) + max(values))
        x[: len(self.nodes)] = mid
        for (p, n), dc in zip(self.source_idx, self.source_dc):
            if n == -1 and p >= 0:
                x[p] = dc
        if guess:
            for name, value in guess.items():
                i = self.index.get(name, -1)
                if i >= 0:
                    x[i] = value
        return x

    def assemble(self, x: np.ndarray, scale: float, dc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual vector and Jacobian at ``x`` with sources scaled by ``scale``."""
        n_nodes = len(self.nodes)
        f = np.zeros(self.size)
        jac = np.zeros((self.size, self.size))

        def v(i: int) -> float:
            return float(x[i]) if i >= 0 else 0.0

        for binding, (d, g, s, b) in zip(self.circuit.devices, self.device_idx):
            vs = v(s)
            ids, gm, gds, gmb = evaluate(binding.params, v(g) - vs, v(d) - vs, v(b) - vs)
            for node, sign in ((d, 1.0), (s, -1.0)):
                if node < 0:
                    continue
                f[node] += sign * ids
                if g >= 0:
                    jac[node, g] += sign * gm
                if d >= 0:
                    jac[node, d] += sign * gds
                if b >= 0:
                    jac[node, b] += sign * gmb
                if s >= 0:
                    jac[node, s] -= sign * (gm + gds + gmb)

        for conductance in self.circuit.conductances:
            a, bb = self.index[conductance.node_a], self.index[conductance.node_b]
            current = conductance.siemens * (v(a) - v(bb))
            for node, sign in ((a, 1.0), (bb, -1.0)):
                if node < 0:
                    continue
                f[node] += sign * current
                if a >= 0:
                    jac[node, a] += sign * conductance.siemens
                if bb >= 0:
                    jac[node, bb] -= sign * conductance.siemens

        for k, (p, n) in enumerate(self.source_idx):
            row = n_nodes + k
            branch = float(x[row])
            if p >= 0:
                f[p] += branch
                jac[p, row] += 1.0
                jac[row, p] += 1.0
            if n >= 0:
                f[n] -= branch
                jac[n, row] -= 1.0
                jac[row, n] -= 1.0
            f[row] = v(p) - v(n) - scale * dc[k]
        return f, jac

    def worst_node(self, f: np.ndarray) -> tuple[str, float]:
        kcl = np.abs(f[: len(self.nodes)])
        if kcl.size == 0:
            return GROUND, 0.0
        i = int(np.argmax(kcl))
        return self.nodes[i], float(kcl[i])


def _linear_step(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError:
        log.warning("Singular Jacobian, falling back to least squares")
        return np.linalg.lstsq(jac, rhs, rcond=None)[0]


def _newton(
    compiled: _Compiled,
    x: np.ndarray,
    scale: float,
    dc: np.ndarray,
    settings: Settings,
) -> tuple[bool, np.ndarray, int, np.ndarray]:
    """Damped Newton; returns (converged, x, iterations, residual vector)."""
    n_nodes = len(compiled.nodes)
    last_step = math.inf
    f = np.zeros(compiled.size)
    for iteration in range(settings.NEWTON_MAX_ITERATIONS + 1):
        f, jac = compiled.assemble(x, scale, dc)
        if not np.all(np.isfinite(f)):
            return False, x, iteration, f
        kcl = float(np.max(np.abs(f[:n_nodes]))) if n_nodes else 0.0
        constraint = float(np.max(np.abs(f[n_nodes:]))) if f.size > n_nodes else 0.0
        if kcl <= settings.KCL_ABSTOL_A and last_step <= settings.VNTOL_V and constraint <= settings.VNTOL_V:
            return True, x, iteration, f
        if iteration == settings.NEWTON_MAX_ITERATIONS:
            break
        delta = _linear_step(jac, -f)
        if not np.all(np.isfinite(delta)):
            return False, x, iteration, f
        dv = float(np.max(np.abs(delta[:n_nodes]))) if n_nodes else 0.0
        if dv > settings.NEWTON_MAX_STEP_V:
            delta *= settings.NEWTON_MAX_STEP_V / dv
            dv = settings.NEWTON_MAX_STEP_V
        x = x + delta
        last_step = dv
    return False, x, settings.NEWTON_MAX_ITERATIONS, f


def _solve_vector(
    compiled: _Compiled,
    x0: np.ndarray,
    dc: np.ndarray,
    settings: Settings,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Solve at full source values; returns (x, residual, iterations, source steps)."""
    ok, x, iterations, f = _newton(compiled, x0.copy(), 1.0, dc, settings)
    if ok:
        return x, f, iterations, 0

    log.warning(f"Newton failed on '{compiled.circuit.name}', trying source stepping")
    steps = settings.SOURCE_STEPS
    x = np.zeros(compiled.size)
    total = iterations
    for k in range(1, steps + 1):
        ok, x, used, f = _newton(compiled, x, k / steps, dc, settings)
        total += used
        if not ok:
            node, residual = compiled.worst_node(f)
            raise ConvergenceError(
                f"No DC solution for '{compiled.circuit.name}': source step {k}/{steps} failed "
                f"after {settings.NEWTON_MAX_ITERATIONS} Newton iterations; worst node "
                f"'{node}' has KCL residual {residual:.3e} A",
                node=node,
                residual=residual,
                details={"source_step": k},
            )
    return x, f, total, steps


def _operating_point(
    compiled: _Compiled,
    x: np.ndarray,
    f: np.ndarray,
    converged: bool,
    iterations: int = 0,
    source_steps: int = 0,
) -> OperatingPoint:
    n_nodes = len(compiled.nodes)
    voltages = {name: float(x[i]) for i, name in enumerate(compiled.nodes)}
    branches = {v.name: float(x[n_nodes + k]) for k, v in enumerate(compiled.circuit.sources)}
    biases = {
        d.name: make_bias(d.params, *terminal_voltages(d, voltages)) for d in compiled.circuit.devices
    }
    residual = float(np.max(np.abs(f[:n_nodes]))) if n_nodes else 0.0
    return OperatingPoint(
        node_voltages=voltages,
        branch_currents=branches,
        biases=biases,
        converged=converged,
        residual=residual,
        iterations=iterations,
        source_steps=source_steps,
    )


def solve_op(
    circuit: CircuitLike,
    initial_guess: Optional[Mapping[str, float]] = None,
    settings: Optional[Settings] = None,
) -> OperatingPoint:
    """
    Solve the DC operating point.

    Args:
        circuit: Circuit, topology or parsed netlist
        initial_guess: Optional node voltages to start from
        settings: Solver settings; defaults to ``get_settings()``

    Returns:
        Converged operating point; KCL residual at every node within
        ``KCL_ABSTOL_A``

    Raises:
        TopologyError: Without a ground reference or a voltage source
        ConvergenceError: When Newton and source stepping both fail
    """
    settings = settings or get_settings()
    compiled = _Compiled.build(_as_circuit(circuit))
    x, f, iterations, steps = _solve_vector(
        compiled, compiled.initial_guess(initial_guess), compiled.source_dc, settings
    )
    op = _operating_point(compiled, x, f, True, iterations, steps)
    log.debug(
        f"'{compiled.circuit.name}' converged in {iterations} iterations "
        f"({steps} source steps), residual {op.residual:.2e} A"
    )
    return op


def evaluate_op(
    circuit: CircuitLike,
    node_voltages: Mapping[str, float],
    branch_currents: Optional[Mapping[str, float]] = None,
    settings: Optional[Settings] = None,
) -> OperatingPoint:
    """Operating point at given node voltages, without iterating."""
    settings = settings or get_settings()
    compiled = _Compiled.build(_as_circuit(circuit))
    x = np.zeros(compiled.size)
    n_nodes = len(compiled.nodes)
    for i, name in enumerate(compiled.nodes):
        x[i] = node_voltages[name]
    for k, v in enumerate(compiled.circuit.sources):
        x[n_nodes + k] = (branch_currents or {}).get(v.name, 0.0)
    f, _ = compiled.assemble(x, 1.0, compiled.source_dc)
    kcl = float(np.max(np.abs(f[:n_nodes]))) if n_nodes else 0.0
    return _operating_point(compiled, x, f, kcl <= settings.KCL_ABSTOL_A)


def _resolve_drive(circuit: Circuit, spec: str) -> VoltageSource:
    for v in circuit.sources:
        if v.name == spec:
            return v
    try:
        return circuit.source_driving(spec)
    except KeyError:
        raise DomainError(f"'{spec}' is neither a source nor a source-driven node") from None


def _read(voltages: Mapping[str, float], node: str) -> float:
    return 0.0 if node == GROUND else voltages[node]


def _output_value(voltages: Mapping[str, float], output: NodeSpec) -> float:
    if isinstance(output, tuple):
        return _read(voltages, output[0]) - _read(voltages, output[1])
    return _read(voltages, output)


def monotone_span(values: Sequence[float]) -> tuple[int, int]:
    """Inclusive index range of the longest strictly monotone run."""
    if len(values) < 2:
        return (0, max(len(values) - 1, 0))
    best = (0, 0)
    start = 0
    direction = 0
    for i in range(1, len(values)):
        step = values[i] - values[i - 1]
        sign = 1 if step > 0 else (-1 if step < 0 else 0)
        if sign == 0:
            start, direction = i, 0
        elif direction == 0 or sign == direction:
            direction = sign
        else:
            start, direction = i - 1, sign
        if i - start > best[1] - best[0]:
            best = (start, i)
    return best


def sweep_dc(
    circuit: CircuitLike,
    input: NodeSpec,
    start: float,
    stop: float,
    points: int,
    output: NodeSpec,
    settings: Optional[Settings] = None,
) -> TransferCurve:
    """
    DC transfer curve with continuation.

    Args:
        circuit: Circuit, topology or parsed netlist
        input: Source name or source-driven node; a ``(p, n)`` pair drives a
            differential voltage split symmetrically around both sources'
            nominal values
        start: First input value (V)
        stop: Last input value (V)
        points: Number of samples (>= 2)
        output: Node or ``(p, n)`` pair
        settings: Solver settings

    Returns:
        TransferCurve sampled on a uniform grid

    Raises:
        DomainError: On a zero-width range, fewer than 2 points or unknown nodes
        ConvergenceError: Naming the failing input value
    """
    settings = settings or get_settings()
    base = _as_circuit(circuit)
    if points < 2:
        raise DomainError("A sweep needs at least 2 points", {"points": points})
    if not (math.isfinite(start) and math.isfinite(stop)) or start == stop:
        raise DomainError("Sweep range must have non-zero finite width", {"start": start, "stop": stop})
    compiled = _Compiled.build(base)
    out_nodes = output if isinstance(output, tuple) else (output,)
    for node in out_nodes:
        if node != GROUND and node not in compiled.index:
            raise DomainError(f"Unknown output node '{node}'")

    names = [v.name for v in base.sources]
    if isinstance(input, tuple):
        pos, neg = _resolve_drive(base, input[0]), _resolve_drive(base, input[1])
        drives = [(names.index(pos.name), pos.dc, 0.5), (names.index(neg.name), neg.dc, -0.5)]
    else:
        src = _resolve_drive(base, input)
        drives = [(names.index(src.name), 0.0, 1.0)]

    grid = np.linspace(start, stop, points)
    outputs: list[float] = []
    x = compiled.initial_guess()
    for value in grid:
        dc = compiled.source_dc.copy()
        for k, offset, weight in drives:
            dc[k] = offset + weight * float(value)
        try:
            x, _, _, _ = _solve_vector(compiled, x, dc, settings)
        except ConvergenceError as exc:
            exc.details["input"] = float(value)
            exc.message = f"{exc.message} (input {float(value):.6g} V)"
            raise
        voltages = {name: float(x[i]) for i, name in enumerate(compiled.nodes)}
        outputs.append(_output_value(voltages, output))

    inputs = [float(v) for v in grid]
    return TransferCurve(
        input_values=tuple(inputs),
        output_values=tuple(outputs),
        monotone_span=monotone_span(outputs),
    )


def rewire_feedback(topology: Topology, feedback: bool = True) -> Topology:
    """
    Copy of a topology with the input devices' back gates moved.

    With feedback the back gates of devices whose gate is an input node go
    to their drains (the outputs); without, to their sources.
    """
    inputs = set(topology.input_nodes)
    devices = tuple(
        d.model_copy(update={"backgate": d.drain if feedback else d.source}) if d.gate in inputs else d
        for d in topology.devices
    )
    kind = topology.kind
    if not kind.differential:
        kind = TopologyKind.CCS_BG if feedback else TopologyKind.CCS_OL
    return topology.model_copy(
        update={"devices": devices, "kind": kind, "feedback": feedback, "name": kind.value}
    )


def bias_match(
    open_loop: Topology,
    backgate: Optional[Topology] = None,
    settings: Optional[Settings] = None,
) -> BiasMatch:
    """
    Open-loop and back-gate operating points with identical drain currents.

    The back-gate circuit receives per-device threshold offsets that
    cancel the threshold shift its back-gate wiring causes at the
    open-loop node voltages, so both circuits share one set of node
    voltages, currents and small-signal parameters.

    Args:
        open_loop: Topology without back-gate feedback
        backgate: Matching topology with feedback; derived from ``open_loop``
            when omitted
        settings: Solver settings

    Returns:
        BiasMatch with offsets and both operating points

    Raises:
        BiasMatchError: When an offset exceeds ``BIAS_MATCH_WINDOW_V``
    """
    settings = settings or get_settings()
    if backgate is None:
        backgate = rewire_feedback(open_loop, True)
    ol_op = solve_op(open_loop, settings=settings)
    voltages = ol_op.node_voltages

    offsets: dict[str, float] = {}
    new_params = {}
    for ol_dev in open_loop.devices:
        bg_dev = backgate.device(ol_dev.name)
        p = ol_dev.params
        s = p.polarity.sign
        _, _, vbs_ol = terminal_voltages(ol_dev, voltages)
        _, _, vbs_bg = terminal_voltages(bg_dev, voltages)
        offset = p.chi_mag * (s * vbs_bg) - p.chi_mag * (s * vbs_ol)
        if abs(offset) > settings.BIAS_MATCH_WINDOW_V:
            raise BiasMatchError(
                f"Device {ol_dev.name} needs a {offset * 1e3:.1f} mV threshold offset, outside "
                f"the {settings.BIAS_MATCH_WINDOW_V * 1e3:.0f} mV window",
                {"device": ol_dev.name, "offset": offset},
            )
        offsets[ol_dev.name] = offset
        new_params[ol_dev.name] = p.evolve(vt_offset=p.vt_offset + offset)

    bg_circuit = backgate.with_params(new_params)
    bg_op = evaluate_op(bg_circuit, voltages, ol_op.branch_currents, settings=settings)
    if not bg_op.converged:
        raise BiasMatchError(
            "Back-gate circuit does not satisfy KCL at the open-loop node voltages",
            {"residual": bg_op.residual},
        )
    log.debug(f"Bias match offsets: {offsets}")
    return BiasMatch(offsets=offsets, open_loop=ol_op, backgate=bg_op, backgate_circuit=bg_circuit)


def linearize(
    circuit: CircuitLike,
    op: OperatingPoint,
) -> tuple[np.ndarray, list[str], list[str]]:
    """
    Small-signal MNA matrix of a circuit at a solved operating point.

    Returns:
        (matrix, node names, source names); rows follow the node order and
        then one constraint row per voltage source
    """
    compiled = _Compiled.build(_as_circuit(circuit))
    n_nodes = len(compiled.nodes)
    x = np.zeros(compiled.size)
    for i, name in enumerate(compiled.nodes):
        x[i] = op.node_voltages[name]
    for k, v in enumerate(compiled.circuit.sources):
        x[n_nodes + k] = op.branch_currents.get(v.name, 0.0)
    _, jac = compiled.assemble(x, 1.0, compiled.source_dc)
    return jac, list(compiled.nodes), [v.name for v in compiled.circuit.sources]


def trip_point(
    circuit: CircuitLike,
    input: str,
    output: str,
    target: float,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> float:
    """
    Input voltage at which ``output`` crosses ``target``.

    The bracket defaults to the span of the circuit's source values.

    Raises:
        DomainError: If the output does not cross ``target`` inside the bracket
    """
    settings = settings or get_settings()
    base = _as_circuit(circuit)
    src = _resolve_drive(base, input)
    dcs = [0.0, *(v.dc for v in base.sources if v.name != src.name)]
    lo = min(dcs) if lo is None else lo
    hi = max(dcs) if hi is None else hi
    guess: dict[str, float] = {}

    def excess(value: float) -> float:
        op = solve_op(base.with_sources({src.name: value}), guess or None, settings=settings)
        guess.update(op.node_voltages)
        return _read(op.node_voltages, output) - target

    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise DomainError(
            f"Output '{output}' does not cross {target:.6g} V for inputs in [{lo:.6g}, {hi:.6g}] V",
            {"output": output, "target": target},
        )
    return float(brentq(excess, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=200))
