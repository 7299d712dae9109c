"""
Command-line driver.

Exit status: 0 success, 1 usage error (bad flags, missing/invalid machine or
input file), 2 parse or semantic error, 3 validation errors present,
4 runtime or physics contract violation (including compile failures).
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import qppio
from .dynamics import RunMode, coherence_budget, run_shots, spectator_phase_rate, timescale_ratio
from .errors import CavityQCError, CompileError, ContractViolation, MachineConfigError, ProgramInvalid
from .machine import PRESETS, load_machine
from .pulsec import compile_circuit, validate

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVALID, EXIT_CONTRACT = 0, 1, 2, 3, 4

SHOTS_HELP = """\
shots semantics: a measurement-free program is evolved once. When all
measurements come after the last segment, the pre-measurement state is
computed once and only the readouts are re-sampled per shot. Otherwise every
shot re-runs the whole program. Shot s draws from an RNG seeded by
(seed, s), so output is identical for any --workers value.
"""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text("utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _is_circuit(text: str) -> bool:
    for line in text.splitlines():
        body = line.split("#", 1)[0].split()
        if body:
            return body[0] == "qubits"
    return False


def _load(path: str, machine_spec: str):
    """Return (program, machine, circuit-or-None) for a .qc or .qpp file."""
    text = _read(path)
    if _is_circuit(text):
        circuit = qppio.parse_circuit(text)
        machine = load_machine(machine_spec, n_atoms=circuit.n_qubits)
        return compile_circuit(circuit, machine), machine, circuit
    program = qppio.parse_program(text)
    machine = load_machine(machine_spec, n_atoms=program.n_atoms)
    return program, machine, None


def _print_diagnostics(diags):
    for d in diags:
        print(d, file=sys.stderr)
    n_err = sum(d.severity == "error" for d in diags)
    print(f"{n_err} error(s), {len(diags) - n_err} warning(s)", file=sys.stderr)


def cmd_compile(args) -> int:
    circuit = qppio.parse_circuit(_read(args.circuit_file))
    machine = load_machine(args.machine, n_atoms=circuit.n_qubits)
    program = compile_circuit(circuit, machine, guard_ratio=args.guard)
    diags = validate(program, machine)
    _print_diagnostics(diags)
    text = qppio.serialize_program(program)
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_INVALID if any(d.severity == "error" for d in diags) else EXIT_OK


def cmd_validate(args) -> int:
    program, machine, _ = _load(args.program_file, args.machine)
    diags = validate(program, machine)
    _print_diagnostics(diags)
    return EXIT_INVALID if any(d.severity == "error" for d in diags) else EXIT_OK


def cmd_run(args) -> int:
    if args.shots < 1:
        raise _UsageError("--shots must be at least 1")
    if args.workers < 1:
        raise _UsageError("--workers must be at least 1")
    program, machine, _ = _load(args.file, args.machine)
    diags = validate(program, machine)
    if diags:
        _print_diagnostics(diags)
    if any(d.severity == "error" for d in diags) and not args.force:
        return EXIT_INVALID
    report = run_shots(
        machine, program, mode=args.mode, seed=args.seed, shots=args.shots, workers=args.workers, validate=False
    )
    print(f"mode {report.mode}  seed {report.seed}  segments {len(report.segment_log)}  "
          f"duration {report.analytics.total_duration:.6g} s")
    if report.histogram is not None:
        total = sum(report.histogram.values())
        exact = report.outcome_probabilities or {}
        keys = sorted(set(report.histogram) | set(exact))
        print(f"{'outcome':>8} {'count':>8} {'freq':>10} {'exact':>12}")
        for key in keys:
            count = report.histogram.get(key, 0)
            ex = f"{exact[key]:12.4e}" if key in exact else f"{'-':>12}"
            print(f"{key:>8} {count:8d} {count / total:10.4f} {ex}")
    else:
        amps = report.qubit_frame_state().qubit_amplitudes()
        n = report.final_state.n
        print(f"{'qubits':>8} {'population':>12}")
        for i, a in enumerate(amps):
            print(f"{format(i, f'0{n}b'):>8} {abs(a) ** 2:12.6e}")
        leak = 1.0 - float(sum(abs(a) ** 2 for a in amps))
        print(f"population outside the qubit subspace: {leak:.3e}")
    if args.json:
        Path(args.json).write_text(qppio.report_to_json(report), "utf-8")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.program_file is None:
        if args.delta is None or args.omega is None:
            raise _UsageError("analyze needs --delta and --omega, or a program file")
        if not (math.isfinite(args.delta) and math.isfinite(args.omega)) or args.omega <= 0:
            raise _UsageError("--omega must be positive and both values finite")
        ratio = timescale_ratio(args.delta, args.omega)
        rate = spectator_phase_rate(args.omega, args.delta) if args.delta != 0 else None
        print(f"{'delta':>14} {'omega':>14} {'tau_off/tau_on':>16} {'phase rate':>16}")
        rate_text = f"{rate:.6g}" if rate is not None else "n/a"
        print(f"{args.delta:14.6g} {args.omega:14.6g} {ratio:16.6g} {rate_text:>16}")
        doc = {"delta": args.delta, "omega": args.omega, "timescale_ratio": ratio, "phase_rate": rate}
    else:
        program, machine, _ = _load(args.program_file, args.machine)
        budget = coherence_budget(machine, program)
        print(f"{'segment':>8} {'duration':>14} {'pulse':>6} " +
              " ".join(f"{'phase[' + str(j) + ']':>12}" for j in range(machine.n)))
        for row in budget.per_segment:
            phases = " ".join(f"{p:12.4e}" for p in row["spectator_phase"])
            print(f"{row['index']:8d} {row['duration']:14.6g} {str(row['pulse']):>6} {phases}")
        print(f"total duration {budget.total_duration:.6g} s, pulses {budget.pulse_count}, "
              f"coherence ratio {budget.coherence_ratio:.6g}")
        print("timescale ratios: " + ", ".join(f"{r:.6g}" for r in budget.timescale_ratios))
        doc = {
            "spectator_phases": list(budget.spectator_phases),
            "timescale_ratios": list(budget.timescale_ratios),
            "pulse_count": budget.pulse_count,
            "coherence_ratio": budget.coherence_ratio,
            "total_duration": budget.total_duration,
            "per_segment": [dict(r) for r in budget.per_segment],
        }
    if args.json:
        Path(args.json).write_text(qppio.to_canonical_json(doc), "utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cavityqc",
        description="Compile, validate, simulate and analyze cavity-bus pulse programs.",
        epilog="exit status: 0 ok, 1 usage, 2 parse/semantic, 3 validation errors, 4 contract violation",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    machine_help = f"preset name ({', '.join(PRESETS)}) or machine JSON file"

    p = sub.add_parser("compile", help="compile a .qc circuit into a .qpp pulse program")
    p.add_argument("circuit_file")
    p.add_argument("--machine", default="rydberg", help=machine_help)
    p.add_argument("--out", help="output .qpp file (default: standard output)")
    p.add_argument("--guard", type=float, default=10.0, help="minimum spectator detuning in Rabi frequencies")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("validate", help="statically check a program (or compiled circuit)")
    p.add_argument("program_file")
    p.add_argument("--machine", default="rydberg", help=machine_help)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a program or circuit", epilog=SHOTS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("file", help=".qpp program or .qc circuit (compiled implicitly)")
    p.add_argument("--machine", default="rydberg", help=machine_help)
    p.add_argument("--mode", choices=[m.value for m in RunMode], default="ideal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--json", help="write the run report as JSON to this file")
    p.add_argument("--force", action="store_true", help="run even when validation reports errors")
    p.add_argument("--workers", type=int, default=1, help="threads used for shots (output is unaffected)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="timescale ratio, spectator phase rate, coherence budget")
    p.add_argument("program_file", nargs="?")
    p.add_argument("--machine", default="rydberg", help=machine_help)
    p.add_argument("--delta", type=float, help="detuning (rad/s)")
    p.add_argument("--omega", type=float, help="Rabi frequency (rad/s)")
    p.add_argument("--json", help="write the analysis as JSON to this file")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"cavityqc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MachineConfigError as exc:
        print(f"cavityqc: machine error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except qppio.ParseError as exc:
        source = next(getattr(args, k) for k in ("circuit_file", "file", "program_file", "command") if getattr(args, k, None))
        print(f"{source}:{exc}", file=sys.stderr)
        return EXIT_PARSE
    except ProgramInvalid as exc:
        _print_diagnostics(exc.diagnostics)
        return EXIT_INVALID
    except (CompileError, ContractViolation, CavityQCError) as exc:
        print(f"cavityqc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
