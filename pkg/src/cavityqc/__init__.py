"""Simulator, compiler and tooling for quantum computation on Stark-tuned
three-level atoms (or quantum dots) coupled through one cavity mode."""
from .dynamics import RunMode, RunReport, evolve_segment, run_program, run_shots
from .errors import (
    CavityQCError,
    CompileError,
    ContractViolation,
    MachineConfigError,
    ProgramInvalid,
    ProtocolViolation,
)
from .machine import MachineConfig, MeasureDirective, PulseProgram, ScheduleSegment, load_machine, load_preset
from .protocol import Gate, cnot, cphase, gate_fidelity
from .pulsec import Circuit, Diagnostic, compile_circuit, euler_decompose, validate
from .qppio import ParseError, parse_circuit, parse_program, report_to_json, serialize_circuit, serialize_program
from .qstate import BasisLabel, StateVector

__version__ = "0.1.0"

__all__ = [
    "BasisLabel", "CavityQCError", "Circuit", "CompileError", "ContractViolation", "Diagnostic", "Gate",
    "MachineConfig", "MachineConfigError", "MeasureDirective", "ParseError", "ProgramInvalid",
    "ProtocolViolation", "PulseProgram", "RunMode", "RunReport", "ScheduleSegment", "StateVector",
    "cnot", "compile_circuit", "cphase", "euler_decompose", "evolve_segment", "gate_fidelity",
    "load_machine", "load_preset", "parse_circuit", "parse_program", "report_to_json", "run_program",
    "run_shots", "serialize_circuit", "serialize_program", "validate",
]
