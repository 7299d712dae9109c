"""
Text formats: the ``.qc`` circuit language, the ``.qpp`` pulse-program
language, and canonical JSON for run reports.

Circuit language (one statement per line, ``#`` starts a comment)::

    qubits 2
    h 0
    rx 1 pi/2 0
    rz 0 -pi/4
    cnot 0 1
    measure 0

Pulse-program language::

    # @machine rydberg
    atoms 2
    segment 3.9269908169872414e-06 ramp 4
      stark 0 40
      laser on 1.5707963267948966 amp 4e5
    segment 7.8539816339744827e-06
      stark 0 0
      stark 1 80
    measure 1

Stark settings not given in a segment inherit the previous segment's value
(0 V before the first segment). The laser is off unless the segment says
``laser on``. ``# @key value`` comment lines carry program metadata.

Numbers accept decimal/scientific literals and ``pi``, combined with ``*``
and ``/`` and an optional leading ``-`` (no spaces inside a number).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import RunReport
from .machine import MeasureDirective, PulseProgram, ScheduleSegment
from .protocol import Gate
from .pulsec import Circuit


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    column: int  # 1-based
    start: int  # byte offsets into the input, end exclusive
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("spans must be non-empty")


class ParseError(ValueError):
    def __init__(self, span: SourceSpan, expected: tuple[str, ...], found: str, message: str):
        self.span = span
        self.expected = tuple(expected)
        self.found = found
        self.message = message
        detail = f"; expected {' | '.join(self.expected)}" if self.expected else ""
        super().__init__(f"{span.line}:{span.column}: {message} (found {found!r}{detail})")


class SemanticError(ParseError):
    """Well-formed text that violates a structural rule (range, sign, header)."""


# --- lexing ---------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    text: str
    span: SourceSpan


class _Line:
    def __init__(self, tokens: list[_Token], line_no: int, eol: SourceSpan):
        self.tokens = tokens
        self.line_no = line_no
        self.eol = eol
        self.pos = 0

    def _missing(self, expected) -> ParseError:
        span = self.tokens[-1].span if self.tokens else self.eol
        return ParseError(span, tuple(expected), "end of line", "unexpected end of line")

    def next(self, expected=("token",)) -> _Token:
        if self.pos >= len(self.tokens):
            raise self._missing(expected)
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def done(self):
        tok = self.peek()
        if tok is not None:
            raise ParseError(tok.span, ("end of line",), tok.text, "unexpected trailing token")


def _lines(text: str):
    """Yield (_Line, comment) for every line; comment is the text after '#', or None."""
    data = text.encode("utf-8")
    offset = 0
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        line = raw.decode("utf-8")
        body, sep, comment = line.partition("#")
        tokens = []
        for m in re.finditer(r"\S+", body):
            b0 = offset + len(body[: m.start()].encode("utf-8"))
            b1 = b0 + len(m.group().encode("utf-8"))
            tokens.append(_Token(m.group(), SourceSpan(line_no, m.start() + 1, b0, b1)))
        eol_col = len(body.rstrip()) + 1
        eol_byte = offset + len(body.rstrip().encode("utf-8"))
        eol = SourceSpan(line_no, eol_col, eol_byte, eol_byte + 1)
        yield _Line(tokens, line_no, eol), (comment if sep else None)
        offset += len(raw) + 1


_FACTOR = re.compile(r"(pi|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)")


def _number(tok: _Token) -> float:
    s = tok.text
    neg = s.startswith("-")
    body = s[1:] if neg else s
    pos, value, op = 0, None, "*"
    while True:
        m = _FACTOR.match(body, pos)
        if m is None:
            raise ParseError(tok.span, ("number", "pi"), s, "malformed number")
        f = math.pi if m.group() == "pi" else float(m.group())
        if value is None:
            value = f
        elif op == "*":
            value *= f
        else:
            if f == 0:
                raise SemanticError(tok.span, (), s, "division by zero")
            value /= f
        pos = m.end()
        if pos == len(body):
            break
        op = body[pos]
        if op not in "*/":
            raise ParseError(tok.span, ("*", "/"), s, "malformed number")
        pos += 1
    value = -value if neg else value
    if not math.isfinite(value):
        raise SemanticError(tok.span, (), s, "number is not finite")
    return value


def _integer(tok: _Token, what: str) -> int:
    if re.fullmatch(r"\d+", tok.text) is None:
        raise ParseError(tok.span, (what,), tok.text, f"expected a non-negative integer {what}")
    return int(tok.text)


def _index(tok: _Token, count: int, what: str) -> int:
    i = _integer(tok, what)
    if i >= count:
        raise SemanticError(tok.span, (), tok.text, f"{what} {i} out of range [0, {count})")
    return i


# --- circuits ---------------------------------------------------------------

_GATE_SHAPE = {"rx": (1, 2), "rz": (1, 1), "h": (1, 0), "cz": (2, 0), "cnot": (2, 0), "measure": (1, 0)}


def parse_circuit(text: str) -> Circuit:
    n: Optional[int] = None
    ops: list[Gate] = []
    for line, _ in _lines(text):
        head = line.peek()
        if head is None:
            continue
        line.next()
        if n is None:
            if head.text != "qubits":
                raise ParseError(head.span, ("qubits",), head.text, "circuit must start with a qubits header")
            count_tok = line.next(("qubit count",))
            n = _integer(count_tok, "qubit count")
            if n < 1:
                raise SemanticError(count_tok.span, (), count_tok.text, "qubit count must be positive")
            line.done()
            continue
        if head.text not in _GATE_SHAPE:
            if head.text == "qubits":
                raise SemanticError(head.span, (), head.text, "duplicate qubits header")
            raise ParseError(head.span, tuple(_GATE_SHAPE), head.text, "unknown gate")
        n_q, n_p = _GATE_SHAPE[head.text]
        qubits = tuple(_index(line.next(("qubit index",)), n, "qubit") for _ in range(n_q))
        if n_q == 2 and qubits[0] == qubits[1]:
            tok = line.tokens[line.pos - 1]
            raise SemanticError(tok.span, (), tok.text, "two-qubit gate needs distinct qubits")
        params = tuple(_number(line.next(("number",))) for _ in range(n_p))
        line.done()
        ops.append(Gate(head.text, qubits, params))
    if n is None:
        data_len = max(1, len(text.encode("utf-8")))
        raise ParseError(SourceSpan(1, 1, 0, data_len), ("qubits",), "end of input", "missing qubits header")
    return Circuit(n, tuple(ops))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_circuit(circuit: Circuit) -> str:
    out = [f"qubits {circuit.n_qubits}"]
    for op in circuit.ops:
        out.append(" ".join([op.name, *map(str, op.qubits), *map(_fmt, op.params)]))
    return "\n".join(out) + "\n"


# --- pulse programs ---------------------------------------------------------

def parse_program(text: str) -> PulseProgram:
    n: Optional[int] = None
    items: list = []
    metadata: dict = {}
    current: Optional[dict] = None
    prev_volts: list[float] = []

    def close():
        nonlocal current, prev_volts
        if current is None:
            return
        volts = tuple(current["volts"])
        items.append(
            ScheduleSegment(
                current["duration"], volts, current["laser_on"], current["phase"], current["E0"], current["ramp"]
            )
        )
        prev_volts = list(volts)
        current = None

    for line, comment in _lines(text):
        if comment is not None and not line.tokens:
            m = re.match(r"\s*@(\S+)\s*(.*?)\s*$", comment)
            if m:
                metadata[m.group(1)] = m.group(2)
        head = line.peek()
        if head is None:
            continue
        line.next()
        if n is None:
            if head.text != "atoms":
                raise ParseError(head.span, ("atoms",), head.text, "program must start with an atoms header")
            count_tok = line.next(("atom count",))
            n = _integer(count_tok, "atom count")
            if n < 1:
                raise SemanticError(count_tok.span, (), count_tok.text, "atom count must be positive")
            prev_volts = [0.0] * n
            line.done()
            continue
        kw = head.text
        if kw == "segment":
            close()
            dur_tok = line.next(("duration",))
            duration = _number(dur_tok)
            if duration < 0:
                raise SemanticError(dur_tok.span, (), dur_tok.text, "segment duration must be non-negative")
            ramp = 0
            if line.peek() is not None:
                kw_tok = line.next()
                if kw_tok.text != "ramp":
                    raise ParseError(kw_tok.span, ("ramp", "end of line"), kw_tok.text, "unexpected token")
                ramp = _integer(line.next(("ramp steps",)), "ramp step count")
            line.done()
            current = {"duration": duration, "ramp": ramp, "volts": list(prev_volts),
                       "laser_on": False, "phase": 0.0, "E0": None}
        elif kw in ("stark", "laser"):
            if current is None:
                raise SemanticError(head.span, (), kw, f"'{kw}' outside a segment block")
            if kw == "stark":
                atom = _index(line.next(("atom index",)), n, "atom")
                current["volts"][atom] = _number(line.next(("volts",)))
            else:
                state = line.next(("on", "off"))
                if state.text == "off":
                    current.update(laser_on=False, phase=0.0, E0=None)
                elif state.text == "on":
                    phase = _number(line.next(("phase",)))
                    E0 = None
                    if line.peek() is not None:
                        amp_tok = line.next()
                        if amp_tok.text != "amp":
                            raise ParseError(amp_tok.span, ("amp", "end of line"), amp_tok.text, "unexpected token")
                        e_tok = line.next(("field amplitude",))
                        E0 = _number(e_tok)
                        if E0 < 0:
                            raise SemanticError(e_tok.span, (), e_tok.text, "field amplitude must be non-negative")
                    current.update(laser_on=True, phase=phase, E0=E0)
                else:
                    raise ParseError(state.span, ("on", "off"), state.text, "expected laser on|off")
            line.done()
        elif kw == "measure":
            close()
            atom = _index(line.next(("atom index",)), n, "atom")
            line.done()
            items.append(MeasureDirective(atom))
        elif kw == "atoms":
            raise SemanticError(head.span, (), kw, "duplicate atoms header")
        else:
            raise ParseError(head.span, ("segment", "stark", "laser", "measure"), kw, "unknown statement")
    close()
    if n is None:
        data_len = max(1, len(text.encode("utf-8")))
        raise ParseError(SourceSpan(1, 1, 0, data_len), ("atoms",), "end of input", "missing atoms header")
    return PulseProgram(n, tuple(items), metadata)


def serialize_program(program: PulseProgram) -> str:
    out = [f"# @{k} {v}" for k, v in sorted(program.metadata.items())]
    out.append(f"atoms {program.n_atoms}")
    for item in program.items:
        if isinstance(item, MeasureDirective):
            out.append(f"measure {item.atom}")
            continue
        head = f"segment {_fmt(item.duration)}"
        if item.ramp_steps:
            head += f" ramp {item.ramp_steps}"
        out.append(head)
        out += [f"  stark {j} {_fmt(v)}" for j, v in enumerate(item.stark_voltages)]
        if item.laser_on:
            line = f"  laser on {_fmt(item.laser_phase)}"
            if item.laser_E0 is not None:
                line += f" amp {_fmt(item.laser_E0)}"
            out.append(line)
    return "\n".join(out) + "\n"


# --- JSON -------------------------------------------------------------------

def _canonical(obj):
    """Normalize to JSON-native types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _emit(obj) -> str:
    if isinstance(obj, dict):
        body = ", ".join(f"{json.dumps(k)}: {_emit(obj[k])}" for k in sorted(obj))
        return "{" + body + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(_emit(v) for v in obj) + "]"
    if isinstance(obj, float):
        s = format(obj, ".17g")
        if not re.search(r"[.eninf]", s):
            s += ".0"
        return s
    return json.dumps(obj)


def to_canonical_json(obj) -> str:
    """Sorted keys, floats with 17 significant digits, byte-stable."""
    return _emit(_canonical(obj)) + "\n"


def report_to_dict(report: RunReport) -> dict:
    a = report.analytics
    amps = report.final_state.amplitudes
    log = {e.index: e for e in report.segment_log}
    segments = []
    for row in a.per_segment:
        entry = log.get(row["index"])
        segments.append(
            {
                "index": row["index"],
                "duration": row["duration"],
                "pulse": row["pulse"],
                "spectator_phase": list(row["spectator_phase"]),
                "resonances": list(entry.resonances) if entry else [],
                "elapsed": entry.elapsed if entry else None,
            }
        )
    doc = {
        "final_state": [[float(z.real), float(z.imag)] for z in amps],
        "measurements": [
            {"atom": m.atom, "outcome": m.outcome, "probability": m.probability} for m in report.measurements
        ],
        "analytics": {
            "spectator_phases": list(a.spectator_phases),
            "timescale_ratios": list(a.timescale_ratios),
            "pulse_count": a.pulse_count,
            "coherence_ratio": a.coherence_ratio,
            "total_duration": a.total_duration,
        },
        "segments": segments,
        "mode": str(report.mode.value if hasattr(report.mode, "value") else report.mode),
        "seed": report.seed,
        "n_atoms": report.final_state.n,
        "photon_cutoff": report.final_state.n_ph,
    }
    if report.histogram is not None:
        doc["histogram"] = dict(report.histogram)
    if report.outcome_probabilities is not None:
        doc["outcome_probabilities"] = dict(report.outcome_probabilities)
    return doc


def report_to_json(report: RunReport) -> str:
    return to_canonical_json(report_to_dict(report))
