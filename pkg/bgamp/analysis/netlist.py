"""
SPICE-like netlist parsing and emission.

Supported cards::

    * comment
    M<name> <drain> <gate> <source> <backgate> <model> W=<len> L=<len>
    V<name> <n+> <n-> [DC] <value>
    .model <name> nfet|pfet vt0=<v> kprime=<v> [n= lambda0= chi= gamma= kf= cox= vtoff=]
    .op
    .dc <source> <start> <stop> <points>
    .end

Keywords and element letters are case-insensitive; node names are kept
as written and ``0`` is ground. Values accept engineering suffixes
(T G MEG K M U N P F MIL). M-card geometry is in metres; ``.model``
fields use the device-card units (V, A/V^2, 1/V*um, V^2*F, F/m^2).
Every diagnostic carries a 1-based line and column.
"""

import math
import re
from dataclasses import dataclass
from typing import Iterable

from pydantic import ValidationError

from bgamp.core.exceptions import NetlistSyntaxError, UndefinedModelError
from bgamp.core.logging import get_analysis_logger
from bgamp.models.circuit import GROUND
from bgamp.models.device import DeviceParams, Polarity
from bgamp.models.netlist import DeviceCard, Directive, ModelCard, Netlist, SourceCard

log = get_analysis_logger("netlist")

_TOKEN_RE = re.compile(r"[^\s=]+\s*=\s*[^\s=]*|=|[^\s=]+")
_VALUE_RE = re.compile(
    r"^(?P<mantissa>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<suffix>meg|mil|[tgkmunpf])?$",
    re.IGNORECASE,
)
_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_NODE_RE = re.compile(r"^[A-Za-z0-9_]+$")

_SUFFIX_EXPONENT = {"t": 12, "g": 9, "meg": 6, "k": 3, "m": -3, "u": -6, "n": -9, "p": -12, "f": -15}

_MODEL_KEYS = {
    "vt0": "vt0",
    "kprime": "kprime",
    "n": "n_slope",
    "lambda0": "lambda0",
    "chi": "chi_mag",
    "gamma": "gamma_noise",
    "kf": "k_flicker",
    "cox": "cox_area",
    "vtoff": "vt_offset",
}
_MODEL_REQUIRED = ("vt0", "kprime")
_MODEL_TYPES = {"nfet": Polarity.N, "pfet": Polarity.P}
_DIRECTIVES = (".model", ".op", ".dc", ".end")
_ELEMENT_LETTERS = ("M", "V")


@dataclass(frozen=True)
class _Token:
    text: str
    column: int

    @property
    def is_assignment(self) -> bool:
        return "=" in self.text

    def split_assignment(self) -> tuple[str, str, int]:
        """Key, value and the value's column."""
        key, _, rest = self.text.partition("=")
        value = rest.strip()
        value_col = self.column + len(self.text) - len(rest) + (len(rest) - len(rest.lstrip()))
        return key.strip(), value, value_col


def parse_value(text: str, line: int = 0, column: int = 0) -> float:
    """
    Convert a SPICE number with optional engineering suffix.

    Args:
        text: Token such as ``0.15u``, ``1e-25`` or ``3MEG``
        line: Line for diagnostics
        column: Column for diagnostics

    Returns:
        The value as float

    Raises:
        NetlistSyntaxError: If the token is not a number
    """
    match = _VALUE_RE.match(text)
    if match is None:
        raise NetlistSyntaxError(f"invalid number '{text}'", line, column, ("<number>",))
    mantissa = match.group("mantissa")
    suffix = (match.group("suffix") or "").lower()
    if not suffix:
        value = float(mantissa)
    elif suffix == "mil":
        value = float(mantissa) * 25.4e-6
    elif "e" in mantissa.lower():
        value = float(mantissa) * 10.0 ** _SUFFIX_EXPONENT[suffix]
    else:
        value = float(f"{mantissa}e{_SUFFIX_EXPONENT[suffix]}")
    if not math.isfinite(value):
        raise NetlistSyntaxError(f"number out of range '{text}'", line, column, ("<finite number>",))
    return value


def _tokenize(text: str) -> list[_Token]:
    return [_Token(m.group(0), m.start() + 1) for m in _TOKEN_RE.finditer(text)]


class _Parser:
    """Single-pass card parser; models are resolved after all lines are read."""

    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.models: dict[str, ModelCard] = {}
        self.devices: list[DeviceCard] = []
        self.sources: list[SourceCard] = []
        self.directives: list[Directive] = []
        self.names: dict[str, int] = {}
        self.model_names = self._scan_model_names()

    def _scan_model_names(self) -> set[str]:
        names = set()
        for raw in self.lines:
            tokens = raw.split()
            if len(tokens) >= 2 and tokens[0].lower() == ".model":
                names.add(tokens[1].lower())
        return names

    def parse(self) -> Netlist:
        for number, raw in enumerate(self.lines, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("*"):
                continue
            tokens = _tokenize(raw)
            head = tokens[0]
            end_col = len(raw.rstrip()) + 2
            if head.text.startswith("."):
                keyword = head.text.lower()
                if keyword == ".end":
                    if len(tokens) > 1:
                        self._unexpected(tokens[1], number, ())
                    break
                if keyword == ".model":
                    self._parse_model(tokens, number, end_col)
                elif keyword == ".op":
                    if len(tokens) > 1:
                        self._unexpected(tokens[1], number, ())
                    self.directives.append(Directive(kind="op", line=number, column=head.column))
                elif keyword == ".dc":
                    self._parse_dc(tokens, number, end_col)
                else:
                    raise NetlistSyntaxError(
                        f"unknown directive '{head.text}'", number, head.column, _DIRECTIVES
                    )
                continue

            letter = head.text[0].upper()
            if letter not in _ELEMENT_LETTERS:
                raise NetlistSyntaxError(
                    f"unsupported element '{head.text}'", number, head.column,
                    (*_ELEMENT_LETTERS, *_DIRECTIVES),
                )
            self._check_name(head, number)
            if letter == "M":
                self._parse_mos(tokens, number, end_col)
            else:
                self._parse_vsource(tokens, number, end_col)

        return self._finish()

    # -- cards -----------------------------------------------------------

    def _parse_mos(self, tokens: list[_Token], line: int, end_col: int) -> None:
        positional = []
        for tok in tokens[1:]:
            if tok.is_assignment:
                break
            positional.append(tok)
        params = tokens[1 + len(positional):]
        fields = ("<drain>", "<gate>", "<source>", "<backgate>", "<model>")

        if len(positional) == 4 and positional[3].text.lower() in self.model_names:
            raise NetlistSyntaxError(
                "back-gate terminal missing: four-terminal cards need drain, gate, source, "
                "back gate and model",
                line, positional[3].column, ("<backgate>",),
            )
        if len(positional) < 5:
            raise NetlistSyntaxError(
                f"'{tokens[0].text}' is missing {', '.join(fields[len(positional):])}",
                line, end_col if not params else params[0].column, (fields[len(positional)],),
            )
        if len(positional) > 5:
            self._unexpected(positional[5], line, ("W=", "L="))
        for tok in positional[:4]:
            self._check_node(tok, line)

        geometry: dict[str, float] = {}
        for tok in params:
            key, value, value_col = self._assignment(tok, line)
            key = key.upper()
            if key not in ("W", "L"):
                raise NetlistSyntaxError(f"unknown device parameter '{key}'", line, tok.column, ("W=", "L="))
            if key in geometry:
                raise NetlistSyntaxError(f"duplicate parameter '{key}'", line, tok.column, ())
            number = parse_value(value, line, value_col)
            if not number > 0.0:
                raise NetlistSyntaxError(f"{key} must be positive", line, value_col, ("<positive length>",))
            geometry[key] = number
        missing = [k for k in ("W", "L") if k not in geometry]
        if missing:
            raise NetlistSyntaxError(
                f"'{tokens[0].text}' is missing {' and '.join(missing)}",
                line, end_col, tuple(f"{k}=" for k in missing),
            )

        model_tok = positional[4]
        self.devices.append(
            DeviceCard(
                name=tokens[0].text,
                drain=positional[0].text,
                gate=positional[1].text,
                source=positional[2].text,
                backgate=positional[3].text,
                model=model_tok.text.lower(),
                width_m=geometry["W"],
                length_m=geometry["L"],
                line=line,
                column=tokens[0].column,
                model_column=model_tok.column,
            )
        )

    def _parse_vsource(self, tokens: list[_Token], line: int, end_col: int) -> None:
        rest = tokens[1:]
        for tok in rest:
            if tok.is_assignment:
                self._unexpected(tok, line, ("<node>", "DC", "<value>"))
        if len(rest) < 2:
            raise NetlistSyntaxError(
                f"'{tokens[0].text}' is missing {'<n+>' if not rest else '<n->'}",
                line, end_col, ("<node>",),
            )
        for tok in rest[:2]:
            self._check_node(tok, line)
        value_tokens = rest[2:]
        if value_tokens and value_tokens[0].text.upper() == "DC":
            value_tokens = value_tokens[1:]
        if not value_tokens:
            raise NetlistSyntaxError(f"'{tokens[0].text}' is missing its value", line, end_col, ("<value>",))
        if len(value_tokens) > 1:
            self._unexpected(value_tokens[1], line, ())
        if rest[0].text == rest[1].text:
            raise NetlistSyntaxError("source terminals are the same node", line, rest[1].column, ("<node>",))
        value_tok = value_tokens[0]
        self.sources.append(
            SourceCard(
                name=tokens[0].text,
                positive=rest[0].text,
                negative=rest[1].text,
                dc=parse_value(value_tok.text, line, value_tok.column),
                line=line,
                column=tokens[0].column,
            )
        )

    def _parse_model(self, tokens: list[_Token], line: int, end_col: int) -> None:
        if len(tokens) < 2 or tokens[1].is_assignment:
            raise NetlistSyntaxError(
                ".model is missing its name", line, tokens[1].column if len(tokens) > 1 else end_col,
                ("<model name>",),
            )
        name_tok = tokens[1]
        if not _NAME_RE.match(name_tok.text):
            raise NetlistSyntaxError(f"invalid model name '{name_tok.text}'", line, name_tok.column, ("<model name>",))
        if len(tokens) < 3:
            raise NetlistSyntaxError(".model is missing its type", line, end_col, tuple(_MODEL_TYPES))
        type_tok = tokens[2]
        polarity = _MODEL_TYPES.get(type_tok.text.lower())
        if polarity is None:
            raise NetlistSyntaxError(
                f"unknown model type '{type_tok.text}'", line, type_tok.column, tuple(_MODEL_TYPES)
            )
        key = name_tok.text.lower()
        if key in self.models:
            raise NetlistSyntaxError(f"duplicate model '{name_tok.text}'", line, name_tok.column, ())

        values: dict[str, float] = {}
        for tok in tokens[3:]:
            if not tok.is_assignment:
                self._unexpected(tok, line, tuple(f"{k}=" for k in _MODEL_KEYS))
            field, value, value_col = self._assignment(tok, line)
            field = field.lower()
            if field not in _MODEL_KEYS:
                raise NetlistSyntaxError(
                    f"unknown model parameter '{field}'", line, tok.column, tuple(f"{k}=" for k in _MODEL_KEYS)
                )
            if _MODEL_KEYS[field] in values:
                raise NetlistSyntaxError(f"duplicate parameter '{field}'", line, tok.column, ())
            values[_MODEL_KEYS[field]] = parse_value(value, line, value_col)
        missing = [k for k in _MODEL_REQUIRED if _MODEL_KEYS[k] not in values]
        if missing:
            raise NetlistSyntaxError(
                f".model {name_tok.text} is missing {', '.join(missing)}",
                line, end_col, tuple(f"{k}=" for k in missing),
            )
        try:
            params = DeviceParams(polarity=polarity, **values)
        except ValidationError as exc:
            first = exc.errors()[0]
            field = str(first["loc"][0]) if first["loc"] else ""
            column = type_tok.column
            for tok in tokens[3:]:
                card_key = tok.text.partition("=")[0].strip().lower()
                if _MODEL_KEYS.get(card_key) == field:
                    column = tok.column
                    break
            raise NetlistSyntaxError(
                f"invalid model parameter: {first['msg']}", line, column, (f"valid {field}",)
            ) from exc
        self.models[key] = ModelCard(name=key, params=params, line=line, column=tokens[0].column)

    def _parse_dc(self, tokens: list[_Token], line: int, end_col: int) -> None:
        fields = ("<source>", "<start>", "<stop>", "<points>")
        args = tokens[1:]
        for tok in args:
            if tok.is_assignment:
                self._unexpected(tok, line, fields)
        if len(args) < 4:
            raise NetlistSyntaxError(
                f".dc is missing {', '.join(fields[len(args):])}", line, end_col, (fields[len(args)],)
            )
        if len(args) > 4:
            self._unexpected(args[4], line, ())
        start = parse_value(args[1].text, line, args[1].column)
        stop = parse_value(args[2].text, line, args[2].column)
        points_value = parse_value(args[3].text, line, args[3].column)
        if points_value != int(points_value) or points_value < 2:
            raise NetlistSyntaxError(
                "point count must be an integer of at least 2", line, args[3].column, ("<integer >= 2>",)
            )
        if start == stop:
            raise NetlistSyntaxError("sweep range has zero width", line, args[2].column, ("<stop != start>",))
        self.directives.append(
            Directive(
                kind="dc", source=args[0].text, start=start, stop=stop, points=int(points_value),
                line=line, column=tokens[0].column,
            )
        )

    # -- helpers ---------------------------------------------------------

    def _assignment(self, tok: _Token, line: int) -> tuple[str, str, int]:
        if tok.text == "=":
            self._unexpected(tok, line, ("<key>=<value>",))
        key, value, value_col = tok.split_assignment()
        if not value:
            raise NetlistSyntaxError(f"'{key}=' has no value", line, value_col, ("<number>",))
        return key, value, value_col

    def _check_name(self, tok: _Token, line: int) -> None:
        if not _NAME_RE.match(tok.text):
            raise NetlistSyntaxError(f"invalid element name '{tok.text}'", line, tok.column, ("<name>",))
        key = tok.text.upper()
        if key in self.names:
            raise NetlistSyntaxError(
                f"duplicate element '{tok.text}' (first defined on line {self.names[key]})",
                line, tok.column, (),
            )
        self.names[key] = line

    @staticmethod
    def _check_node(tok: _Token, line: int) -> None:
        if not _NODE_RE.match(tok.text):
            raise NetlistSyntaxError(f"invalid node name '{tok.text}'", line, tok.column, ("<node>",))

    @staticmethod
    def _unexpected(tok: _Token, line: int, expected: Iterable[str]) -> None:
        raise NetlistSyntaxError(f"unexpected token '{tok.text}'", line, tok.column, tuple(expected))

    def _finish(self) -> Netlist:
        for device in self.devices:
            if device.model not in self.models:
                raise UndefinedModelError(
                    f"undefined model '{device.model}' for '{device.name}'",
                    device.line, device.model_column, tuple(sorted(self.models)),
                )
        source_names = {s.name.upper() for s in self.sources}
        for directive in self.directives:
            if directive.kind == "dc" and (directive.source or "").upper() not in source_names:
                raise NetlistSyntaxError(
                    f"sweep source '{directive.source}' is not a V card",
                    directive.line, directive.column, tuple(sorted(s.name for s in self.sources)),
                )

        warnings = tuple(self._dangling_nodes())
        for message in warnings:
            log.warning(message)
        return Netlist(
            models=tuple(self.models.values()),
            devices=tuple(self.devices),
            sources=tuple(self.sources),
            directives=tuple(self.directives),
            warnings=warnings,
        )

    def _dangling_nodes(self) -> list[str]:
        uses: dict[str, list[int]] = {}
        for d in self.devices:
            for node in (d.drain, d.gate, d.source, d.backgate):
                uses.setdefault(node, []).append(d.line)
        for v in self.sources:
            for node in (v.positive, v.negative):
                uses.setdefault(node, []).append(v.line)
        return [
            f"node '{node}' has a single connection (line {lines[0]})"
            for node, lines in uses.items()
            if node != GROUND and len(lines) == 1
        ]


def parse_netlist(text: str) -> Netlist:
    """
    Parse netlist text.

    Args:
        text: Netlist source

    Returns:
        Parsed netlist; dangling nodes are reported in ``warnings``

    Raises:
        NetlistSyntaxError: On malformed cards
        UndefinedModelError: When a device references a missing model
    """
    return _Parser(text).parse()


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_netlist(netlist: Netlist) -> str:
    """Canonical text for a netlist; ``parse_netlist`` reproduces its structure."""
    lines = ["* bgamp netlist"]
    defaults = DeviceParams.model_fields
    for card in netlist.models:
        p = card.params
        kind = "nfet" if p.polarity is Polarity.N else "pfet"
        fields = [f"{key}={_fmt(getattr(p, attr))}" for key, attr in _MODEL_KEYS.items()
                  if key in _MODEL_REQUIRED or getattr(p, attr) != defaults[attr].default]
        lines.append(f".model {card.name} {kind} {' '.join(fields)}")
    for d in netlist.devices:
        lines.append(
            f"{d.name} {d.drain} {d.gate} {d.source} {d.backgate} {d.model} "
            f"W={_fmt(d.width_m)} L={_fmt(d.length_m)}"
        )
    for v in netlist.sources:
        lines.append(f"{v.name} {v.positive} {v.negative} DC {_fmt(v.dc)}")
    for directive in netlist.directives:
        if directive.kind == "op":
            lines.append(".op")
        else:
            lines.append(
                f".dc {directive.source} {_fmt(directive.start or 0.0)} "
                f"{_fmt(directive.stop or 0.0)} {directive.points}"
            )
    lines.append(".end")
    return "\n".join(lines) + "\n"
