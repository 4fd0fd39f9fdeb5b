"""
Command-line interface for the back-gate amplifier toolkit.

Every analysis command builds a RunConfig and hands it to ``run``, which
writes one CSV table to stdout or ``--out``. Exit codes: 0 on success,
1 on analysis errors and invalid Monte Carlo runs (the CSV then ends
with an ``# ERROR:`` line), 2 on usage and netlist errors.
"""

from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from bgamp.analysis.circuits import recognize_topology
from bgamp.analysis.dcsolve import solve_op, sweep_dc
from bgamp.analysis.figures import (
    CMRR_HEADER,
    DIST_HEADER,
    GAIN_HEADER,
    MC_HEADER,
    NOISE_HEADER,
    OP_HEADER,
    SWEEP_HEADER,
    Row,
    cmrr_row,
    dist_row,
    gain_row,
    mc_row,
    noise_rows,
    op_rows,
    sweep_rows,
    template_topology,
)
from bgamp.analysis.mismatch import cmrr_monte_carlo
from bgamp.analysis.netlist import parse_netlist
from bgamp.analysis.sizing import ccs_for_gm_over_id, size_for_gm_over_id
from bgamp.core.config import Settings, get_settings
from bgamp.core.exceptions import (
    EXIT_OK,
    EXIT_USAGE,
    BgampError,
    ConvergenceError,
    DomainError,
    handle_exception,
)
from bgamp.core.export import write_table
from bgamp.core.logging import setup_logging
from bgamp.models.circuit import Circuit, Topology
from bgamp.models.netlist import Netlist
from bgamp.schemas.reports import CmrrStats, MismatchSpec
from bgamp.schemas.run import Command, RunConfig, SweepAxis

app = typer.Typer(
    name="bgamp",
    help="Back-gate feedback amplifier analysis",
    add_completion=False,
)

console = Console(stderr=True)

HEADERS = {
    Command.OP: OP_HEADER,
    Command.SWEEP: SWEEP_HEADER,
    Command.GAIN: GAIN_HEADER,
    Command.NOISE: NOISE_HEADER,
    Command.DIST: DIST_HEADER,
    Command.CMRR: CMRR_HEADER,
    Command.MC: MC_HEADER,
}

DEFAULT_SWEEP_POINTS = 181


def parse_axis(text: Optional[str]) -> list[float]:
    """
    Parse an axis flag: ``a,b,c`` lists values, ``start:stop:count`` spaces them evenly.

    Raises:
        typer.BadParameter: On malformed input
    """
    if not text:
        return []
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            return [float(v) for v in np.linspace(start, stop, count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise typer.BadParameter(f"'{text}' is neither 'a,b,c' nor 'start:stop:count'") from None


def _names(text: Optional[str]) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _node_spec(text: Optional[str]) -> Union[str, tuple[str, str], None]:
    if text is None:
        return None
    parts = _names(text)
    if len(parts) == 2:
        return (parts[0], parts[1])
    if len(parts) == 1:
        return parts[0]
    raise DomainError(f"'{text}' is neither a node nor a 'p,n' pair")


def _load_netlist(path: Path) -> Netlist:
    return parse_netlist(path.read_text(encoding="utf-8"))


def _with_overrides(topology: Topology, config: RunConfig, gmid: Optional[float]) -> Topology:
    if config.chi is not None:
        topology = topology.with_params(
            {d.name: d.params.with_chi(config.chi) for d in topology.devices}
        )  # type: ignore[assignment]
    if gmid is None:
        return topology
    if topology.kind.differential:
        return size_for_gm_over_id(topology, gmid)
    return ccs_for_gm_over_id(
        gmid, topology.device("M1").params, topology.device("M2").params, feedback=topology.feedback
    )


def _topologies(config: RunConfig, netlist: Optional[Netlist]) -> Iterator[Topology]:
    """Analysis targets in template, length, gm/Id order."""
    lengths: list[Optional[float]] = list(config.lengths) or [None]
    gmids: list[Optional[float]] = list(config.gm_over_id) or [None]
    if netlist is not None:
        base = recognize_topology(netlist.to_circuit())
        for length in lengths:
            sized = base.with_length(length) if length is not None else base
            for gmid in gmids:
                yield _with_overrides(sized, config, gmid)
        return
    for name in config.templates:
        for length in lengths:
            for gmid in gmids:
                yield template_topology(name, length=length, chi=config.chi, gmid=gmid)


def _sweep(circuit: Circuit, netlist: Optional[Netlist], axis: SweepAxis, settings: Settings) -> list[Row]:
    directive = next((d for d in netlist.directives if d.kind == "dc"), None) if netlist else None
    topology = circuit if isinstance(circuit, Topology) else None

    drive = _node_spec(axis.input)
    output = _node_spec(axis.output)
    start, stop, points = axis.start, axis.stop, axis.points
    if directive is not None:
        drive = drive or directive.source
        start = directive.start if start is None else start
        stop = directive.stop if stop is None else stop
        points = points or directive.points
    if output is None and "out" in circuit.nodes:
        output = "out"
    if topology is not None:
        ins, outs = topology.input_nodes, topology.output_nodes
        drive = drive or (ins if len(ins) == 2 else ins[0])
        output = output or (outs if len(outs) == 2 else outs[0])
        if topology.kind.differential:
            span = (-0.2, 0.2)
        else:
            span = (topology.supplies.vss, topology.supplies.vdd)
        start = span[0] if start is None else start
        stop = span[1] if stop is None else stop
    if drive is None or output is None or start is None or stop is None:
        raise DomainError("sweep needs --input, --output, --start and --stop (or a .dc directive)")
    curve = sweep_dc(circuit, drive, start, stop, points or DEFAULT_SWEEP_POINTS, output, settings=settings)
    return sweep_rows(curve)


def _rows(config: RunConfig, settings: Settings, rows: list[Row]) -> None:
    """Append the command's rows to ``rows`` as they are produced."""
    netlist = _load_netlist(config.netlist) if config.netlist is not None else None

    if config.command in (Command.OP, Command.SWEEP):
        if netlist is not None:
            circuit: Circuit = netlist.to_circuit()
            targets: list[Circuit] = [circuit]
        else:
            targets = list(_topologies(config, None))
        for circuit in targets:
            if config.command is Command.OP:
                op = solve_op(circuit, settings=settings)
                console.print(
                    f"[cyan]{circuit.name}[/cyan]: converged in {op.iterations} iterations, "
                    f"residual {op.residual:.2e} A"
                )
                rows.extend(op_rows(circuit, op))
            else:
                rows.extend(_sweep(circuit, netlist, config.sweep, settings))
        return

    if config.command is Command.MC:
        spec = MismatchSpec(
            avt_v_um=settings.MC_AVT_V_UM if config.avt is None else config.avt,
            sigma_kprime_rel=settings.MC_SIGMA_KPRIME_REL,
            samples=settings.MC_SAMPLES if config.samples is None else config.samples,
            seed=settings.SEED if config.seed is None else config.seed,
            max_failure_fraction=settings.MC_MAX_FAILURE_FRACTION,
        )
        trimmed = config.model_copy(update={"lengths": []})
        invalid: list[CmrrStats] = []
        for topology in _topologies(trimmed, netlist):
            lengths = config.lengths or [topology.devices[0].params.length]
            stats = cmrr_monte_carlo(topology.kind, lengths, spec, topology, settings)
            rows.extend(mc_row(s) for s in stats)
            invalid.extend(s for s in stats if not s.valid)
        if invalid:
            worst = max(invalid, key=lambda s: s.n_failed)
            raise ConvergenceError(
                f"Monte Carlo run invalid: {worst.n_failed}/{worst.samples + worst.n_failed} samples of "
                f"{worst.kind.value} at L = {worst.length_um:g} um failed to converge "
                f"(limit {spec.max_failure_fraction:.0%})",
                details={"invalid_rows": len(invalid)},
            )
        return

    for topology in _topologies(config, netlist):
        if config.command is Command.GAIN:
            rows.append(gain_row(topology, settings))
        elif config.command is Command.NOISE:
            rows.extend(noise_rows(topology, settings=settings))
        elif config.command is Command.DIST:
            rows.append(dist_row(topology, settings))
        elif config.command is Command.CMRR:
            rows.append(cmrr_row(topology, settings))


def run(config: RunConfig) -> int:
    """
    Execute one analysis and write its CSV table.

    Returns:
        Process exit code
    """
    settings = get_settings()
    if config.temperature is not None:
        settings = settings.model_copy(update={"TEMPERATURE_K": config.temperature})
    if config.netlist is not None and not config.netlist.is_file():
        console.print(f"[red]error:[/red] netlist '{config.netlist}' does not exist")
        return EXIT_USAGE

    header = HEADERS[config.command]
    rows: list[Row] = []
    try:
        _rows(config, settings, rows)
    except Exception as exc:
        code = handle_exception(exc)
        message = exc.message if isinstance(exc, BgampError) else f"{type(exc).__name__}: {exc}"
        console.print(f"error: {message}", markup=False, style="red")
        if code == EXIT_USAGE:
            return code
        write_table(header, rows, config.out, error=message)
        return code
    write_table(header, rows, config.out)
    return EXIT_OK


def _config(command: Command, **fields: object) -> RunConfig:
    try:
        return RunConfig(command=command, **fields)  # type: ignore[arg-type]
    except ValidationError as exc:
        first = exc.errors()[0]
        raise typer.BadParameter(str(first.get("msg", exc))) from None


TemplateOpt = typer.Option(None, "--template", "-t", help="ccs, ccs_ol, scmfb or dcmfb (comma list)")
NetlistOpt = typer.Option(None, "--netlist", help="Netlist file")
LengthOpt = typer.Option(None, "--L", help="Channel lengths in um: 'a,b' or 'start:stop:count'")
GmidOpt = typer.Option(None, "--gmid", help="gm/Id targets in S/A: 'a,b' or 'start:stop:count'")
ChiOpt = typer.Option(None, "--chi", help="Back-gate coupling override")
OutOpt = typer.Option(None, "--out", "-o", help="CSV output path (stdout when omitted)")


def _common(
    command: Command,
    template: Optional[str],
    netlist: Optional[Path],
    lengths: Optional[str],
    gmid: Optional[str],
    chi: Optional[float],
    out: Optional[Path],
    **extra: object,
) -> None:
    config = _config(
        command,
        templates=_names(template),
        netlist=netlist,
        lengths=parse_axis(lengths),
        gm_over_id=parse_axis(gmid),
        chi=chi,
        out=out,
        **extra,
    )
    raise typer.Exit(code=run(config))


@app.callback()
def main() -> None:
    """Back-gate feedback amplifier analysis toolkit."""
    setup_logging()


@app.command()
def op(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    chi: Optional[float] = ChiOpt,
    out: Optional[Path] = OutOpt,
) -> None:
    """Solve the DC operating point."""
    _common(Command.OP, template, netlist, lengths, None, chi, out)


@app.command()
def sweep(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    chi: Optional[float] = ChiOpt,
    input: Optional[str] = typer.Option(None, "--input", help="Swept source, node, or 'p,n' pair"),
    output: Optional[str] = typer.Option(None, "--output", help="Output node or 'p,n' pair"),
    start: Optional[float] = typer.Option(None, "--start", help="First input value (V)"),
    stop: Optional[float] = typer.Option(None, "--stop", help="Last input value (V)"),
    points: Optional[int] = typer.Option(None, "--points", help="Number of sweep points"),
    out: Optional[Path] = OutOpt,
) -> None:
    """DC transfer curve."""
    if points is not None and points < 2:
        raise typer.BadParameter("--points must be at least 2")
    axis = SweepAxis(input=input, output=output, start=start, stop=stop, points=points)
    _common(Command.SWEEP, template, netlist, lengths, None, chi, out, sweep=axis)


@app.command()
def gain(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    gmid: Optional[str] = GmidOpt,
    chi: Optional[float] = ChiOpt,
    out: Optional[Path] = OutOpt,
) -> None:
    """Open-loop and back-gate gain, calculated and simulated."""
    _common(Command.GAIN, template, netlist, lengths, gmid, chi, out)


@app.command()
def noise(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    gmid: Optional[str] = GmidOpt,
    chi: Optional[float] = ChiOpt,
    temp: Optional[float] = typer.Option(None, "--temp", help="Noise temperature (K)"),
    out: Optional[Path] = OutOpt,
) -> None:
    """Input-referred noise density with and without feedback."""
    _common(Command.NOISE, template, netlist, lengths, gmid, chi, out, temperature=temp)


@app.command()
def dist(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    gmid: Optional[str] = GmidOpt,
    chi: Optional[float] = ChiOpt,
    out: Optional[Path] = OutOpt,
) -> None:
    """IP3 with and without feedback, analytic and fitted."""
    _common(Command.DIST, template, netlist, lengths, gmid, chi, out)


@app.command()
def cmrr(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    gmid: Optional[str] = GmidOpt,
    chi: Optional[float] = ChiOpt,
    out: Optional[Path] = OutOpt,
) -> None:
    """Common-mode gain and CMRR of the CMFB stages."""
    _common(Command.CMRR, template, netlist, lengths, gmid, chi, out)


@app.command()
def mc(
    template: Optional[str] = TemplateOpt,
    netlist: Optional[Path] = NetlistOpt,
    lengths: Optional[str] = LengthOpt,
    chi: Optional[float] = ChiOpt,
    n: Optional[int] = typer.Option(None, "--n", help="Samples per length"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed (falls back to BGAMP_SEED)"),
    avt: Optional[float] = typer.Option(None, "--avt", help="Threshold mismatch coefficient (V*um)"),
    out: Optional[Path] = OutOpt,
) -> None:
    """Monte Carlo CMRR statistics."""
    _common(Command.MC, template, netlist, lengths, None, chi, out, samples=n, seed=seed, avt=avt)


@app.command()
def config() -> None:
    """Show current configuration."""
    settings = get_settings()

    table = Table(title="bgamp configuration")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    for name, value in settings.model_dump().items():
        table.add_row(name, str(value))

    Console().print(table)


@app.command("validate-netlist")
def validate_netlist(path: Path = typer.Argument(..., help="Netlist file")) -> None:
    """Parse a netlist and report diagnostics."""
    if not path.is_file():
        console.print(f"error: netlist '{path}' does not exist", markup=False)
        raise typer.Exit(code=EXIT_USAGE)
    try:
        netlist = _load_netlist(path)
    except BgampError as exc:
        code = handle_exception(exc)
        console.print(f"{path}: {exc.message}", markup=False)
        raise typer.Exit(code=code)
    for warning in netlist.warnings:
        console.print(f"{path}: warning: {warning}", markup=False)
    typer.echo(
        f"{path}: {len(netlist.models)} models, {len(netlist.devices)} devices, "
        f"{len(netlist.sources)} sources, {len(netlist.directives)} directives"
    )


if __name__ == "__main__":
    app()
