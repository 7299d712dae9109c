"""
Circuit -> pulse-program compiler and static program validator.

Compilation keeps every idle atom parked at 0 V and tunes exactly one
transition into resonance per segment. Because the frame rotates at the laser
frequency, parked levels keep precessing; the compiler tracks those bare
phases and folds them into each laser phase and into the controlled-phase
Z correction, so a compiled program implements the circuit exactly in the
qubit frame (see :meth:`cavityqc.dynamics.RunReport.qubit_frame_state`).

Diagnostic codes
----------------
PROGRAM_SHAPE           error    program atom count or voltage vector mismatches the machine
ATOM_RANGE              error    measurement directive names a missing atom
UNPHYSICAL_VOLTAGE      error    a voltage drives a level splitting non-positive
MULTI_RESONANT          error    more than one transition resonant with the cavity, or with the laser
LASER_CAVITY_SAME_ATOM  error    one atom resonant with laser and cavity in the same segment
LASER_E0E1_RESONANT     error    the laser is resonant with an e0<->e1 transition (leakage channel)
MULTI_PHOTON            error    a second excitation is swapped into an occupied cavity
CAVITY_NOT_VACUUM       error    cavity may hold a photon at a measurement or at program end
NEAR_RESONANT           warning  a spectator transition is detuned by less than the guard ratio
CROSSING_DWELL          warning  a ramp dwells >= 0.01/Omega_c inside a resonance it crosses
LOW_COHERENCE           warning  coherence time / program duration below 10
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import protocol
from .dynamics import FramePhases, coherence_budget
from .errors import CompileError, ContractViolation, UnphysicalVoltageError, UntunableTransitionError
from .machine import (
    TRANSITION_NAMES,
    MachineConfig,
    MeasureDirective,
    PulseProgram,
    ScheduleSegment,
    ramp_steps,
    resonance_report,
    stark_voltage_for,
    transition_frequency,
)
from .protocol import Gate, wrap_phase

GATE_SET = ("rx", "rz", "h", "cz", "cnot", "measure")
_ARITY = {"rx": (1, 2), "rz": (1, 1), "h": (1, 0), "cz": (2, 0), "cnot": (2, 0), "measure": (1, 0)}

DIAGNOSTIC_CODES = {
    "PROGRAM_SHAPE": "error",
    "ATOM_RANGE": "error",
    "UNPHYSICAL_VOLTAGE": "error",
    "MULTI_RESONANT": "error",
    "LASER_CAVITY_SAME_ATOM": "error",
    "LASER_E0E1_RESONANT": "error",
    "MULTI_PHOTON": "error",
    "CAVITY_NOT_VACUUM": "error",
    "NEAR_RESONANT": "warning",
    "CROSSING_DWELL": "warning",
    "LOW_COHERENCE": "warning",
}


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    ops: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for op in self.ops:
            if op.name not in GATE_SET:
                raise ValueError(f"unsupported gate {op.name!r}")
            n_q, n_p = _ARITY[op.name]
            if len(op.qubits) != n_q or len(op.params) != n_p:
                raise ValueError(f"gate {op.name} expects {n_q} qubit(s) and {n_p} parameter(s)")
            if any(not 0 <= q < self.n_qubits for q in op.qubits):
                raise ValueError(f"gate {op.name} addresses a qubit outside [0, {self.n_qubits})")
            if len(set(op.qubits)) != len(op.qubits):
                raise ValueError(f"gate {op.name} needs distinct qubits")


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    segment: Optional[int]
    message: str

    def __str__(self):
        where = f"segment {self.segment}" if self.segment is not None else "program"
        return f"{self.severity}: {self.code} ({where}): {self.message}"


# --- single-qubit algebra -------------------------------------------------

def single_qubit_matrix(gate: Gate) -> np.ndarray:
    if gate.name == "rx":
        theta, phi = gate.params
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        return np.array(
            [[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]], dtype=complex
        )
    if gate.name == "rz":
        (theta,) = gate.params
        return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    if gate.name == "h":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    raise ValueError(f"{gate.name} is not a single-qubit gate")


def laser_pulse_matrix(k: float, phase: float) -> np.ndarray:
    return protocol.laser_pulse_site_matrix(k, phase)[:2, :2]


def euler_decompose(target, tol: float = 1e-10) -> list[tuple[float, float]]:
    """Up to three laser pulses (k, phase), in time order, equal to ``target`` up to global phase.

    Writes target ~ R(beta, phi) . Zphase(zeta): the z part becomes two pi pulses
    with offset phases and the xy rotation a single pulse of area beta/pi.
    """
    U = np.asarray(target, dtype=complex)
    if U.shape != (2, 2) or np.max(np.abs(U.conj().T @ U - np.eye(2))) > tol:
        raise ContractViolation("euler_decompose needs a 2x2 unitary")
    Us = U / np.sqrt(np.linalg.det(U))
    a, b = Us[0, 0], Us[0, 1]
    c = min(1.0, abs(a))
    beta = 2.0 * math.acos(c)
    if c > 1e-12:
        zeta = -2.0 * float(np.angle(a))
    else:
        zeta = 0.0
    phi = float(np.angle(b)) + math.pi / 2 - zeta / 2 if abs(b) > 1e-12 else 0.0

    pulses: list[tuple[float, float]] = []
    if abs(np.exp(1j * zeta) - 1.0) > 1e-12:
        pulses += [(p.k, p.phase) for p in protocol.z_correction_pulses(0, zeta)]
    if beta > 1e-12:
        pulses.append((beta / math.pi, wrap_phase(phi)))
    return pulses


def pulses_matrix(pulses: Sequence[tuple[float, float]]) -> np.ndarray:
    M = np.eye(2, dtype=complex)
    for k, phase in pulses:
        M = laser_pulse_matrix(k, phase) @ M
    return M


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Ideal 2**n unitary of a measurement-free circuit (qubit 0 most significant)."""
    n = circuit.n_qubits
    U = np.eye(2**n, dtype=complex)
    bits = (np.arange(2**n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    for op in circuit.ops:
        if op.name == "measure":
            raise ValueError("circuit_unitary is only defined for measurement-free circuits")
        if op.name == "cz":
            m, t = op.qubits
            G = np.diag(np.where(bits[:, m] & bits[:, t], -1.0, 1.0)).astype(complex)
        elif op.name == "cnot":
            m, t = op.qubits
            flipped = np.arange(2**n) ^ (bits[:, m] << (n - 1 - t))
            G = np.zeros((2**n, 2**n), dtype=complex)
            G[flipped, np.arange(2**n)] = 1.0
        else:
            (q,) = op.qubits
            G = np.kron(np.kron(np.eye(2**q), single_qubit_matrix(op)), np.eye(2 ** (n - 1 - q)))
        U = G @ U
    return U


# --- compiler ---------------------------------------------------------------

class _Emitter:
    def __init__(self, machine: MachineConfig, guard_ratio: float):
        self.machine = machine
        self.guard = guard_ratio
        self.items: list = []
        self.frame = FramePhases.zero(machine.n)
        self.park = (0.0,) * machine.n
        self._checked: dict = {}
        self._check_configuration("park", None, self.park, laser_on=True)

    def _voltages(self, role: str, atom: int) -> tuple[float, ...]:
        target_tr, target_w = {
            "laser": ("ge0", self.machine.laser.omega_l),
            "cavity:ge0": ("ge0", self.machine.cavity.omega_c),
            "cavity:e0e1": ("e0e1", self.machine.cavity.omega_c),
        }[role]
        try:
            V = stark_voltage_for(self.machine.atoms[atom], target_tr, target_w)
        except UntunableTransitionError as exc:
            raise CompileError(f"atom {atom}: {exc}") from None
        volts = list(self.park)
        volts[atom] = V
        volts = tuple(volts)
        if (role, atom) not in self._checked:
            self._check_configuration(role, atom, volts, laser_on=(role == "laser"))
            self._checked[(role, atom)] = True
        return volts

    def _check_configuration(self, role, atom, volts, laser_on):
        seg = ScheduleSegment(0.0, volts, laser_on=laser_on)
        try:
            rep = resonance_report(self.machine, seg, threshold=0.0, voltages=volts)
        except UnphysicalVoltageError as exc:
            raise CompileError(f"{role} tuning of atom {atom}: {exc}") from None
        for e in rep.entries:
            addressed_laser = role == "laser" and e.atom == atom and e.transition == "ge0"
            addressed_cavity = role.startswith("cavity") and e.atom == atom and role == f"cavity:{e.transition}"
            if not addressed_cavity and e.cavity_ratio < self.guard:
                raise CompileError(
                    f"{role} tuning of atom {atom}: atom {e.atom} {e.transition} is only "
                    f"{e.cavity_ratio:.3g} Omega_c from the cavity (guard {self.guard})"
                )
            if laser_on and not addressed_laser and e.laser_ratio < self.guard:
                raise CompileError(
                    f"{role} tuning of atom {atom}: atom {e.atom} {e.transition} is only "
                    f"{e.laser_ratio:.3g} Omega_l from the laser (guard {self.guard})"
                )

    def _segment(self, volts, duration, laser_on=False, phase=0.0):
        self.items.append(ScheduleSegment(duration, volts, laser_on=laser_on, laser_phase=phase))
        self.frame = self.frame.advance(self.machine, volts, duration)

    def laser(self, atom: int, k: float, phase: float):
        """Laser pulse whose phase is ``phase`` in the qubit frame."""
        volts = self._voltages("laser", atom)
        programmed = wrap_phase(phase + self.frame.e0[atom])
        self._segment(volts, k * math.pi / self.machine.laser_rabi(atom, "ge0"), True, programmed)

    def cavity(self, atom: int, transition: str, k: float) -> float:
        """Cavity pulse; returns the frame phase of its coupling at pulse start."""
        volts = self._voltages(f"cavity:{transition}", atom)
        f = self.frame
        theta = (f.e0[atom] if transition == "ge0" else f.e1[atom] - f.e0[atom]) - f.photon
        self._segment(volts, k * math.pi / self.machine.cavity_rabi(transition))
        return theta

    def rotation(self, atom: int, theta: float, phi: float):
        if abs(theta) < 1e-15:
            return
        axis = phi if theta > 0 else phi + math.pi
        self.laser(atom, abs(theta) / math.pi, protocol.laser_phase_for_axis(axis))

    def cz(self, control: int, target: int):
        seq = protocol.cphase(self.machine, control, target)
        thetas = [self.cavity(p.atom, p.transition, p.k) for p in seq.raw]
        residual = thetas[2] - thetas[0]
        corrected = protocol.cphase(self.machine, control, target, residual_phase=residual)
        for p in corrected.pulses[3:]:
            self.laser(p.atom, p.k, p.phase)

    def gate(self, op: Gate):
        if op.name == "rx":
            self.rotation(op.qubits[0], *op.params)
        elif op.name in ("rz", "h"):
            for k, phase in euler_decompose(single_qubit_matrix(op)):
                self.laser(op.qubits[0], k, phase)
        elif op.name == "cz":
            self.cz(*op.qubits)
        elif op.name == "cnot":
            for sub in protocol.cnot(self.machine, *op.qubits):
                self.gate(sub)
        elif op.name == "measure":
            self.items.append(MeasureDirective(op.qubits[0]))
        else:
            raise CompileError(f"unsupported gate {op.name!r}")


def circuit_fingerprint(circuit: Circuit) -> str:
    from .qppio import serialize_circuit

    return hashlib.sha256(serialize_circuit(circuit).encode("utf-8")).hexdigest()


def compile_circuit(circuit: Circuit, machine: MachineConfig, guard_ratio: float = 10.0) -> PulseProgram:
    if circuit.n_qubits > machine.n:
        raise CompileError(f"circuit needs {circuit.n_qubits} atoms, machine has {machine.n}")
    emitter = _Emitter(machine, guard_ratio)
    for op in circuit.ops:
        emitter.gate(op)
    metadata = {"machine": machine.name, "source_sha256": circuit_fingerprint(circuit)}
    return PulseProgram(machine.n, tuple(emitter.items), metadata)


# --- validator --------------------------------------------------------------

def _crossing_dwell(w0: float, w1: float, target: float, rabi: float, duration: float) -> Optional[float]:
    """Time a linear sweep w0 -> w1 spends within +-rabi of ``target`` if it crosses it."""
    if (w0 - target) * (w1 - target) >= 0:
        return None
    lo = (target - rabi - w0) / (w1 - w0)
    hi = (target + rabi - w0) / (w1 - w0)
    lo, hi = sorted((lo, hi))
    return duration * (min(1.0, hi) - max(0.0, lo))


def validate(
    program: PulseProgram,
    machine: MachineConfig,
    threshold: float = 1.0,
    guard_ratio: float = 10.0,
    dwell_factor: float = 0.01,
    min_coherence_ratio: float = 10.0,
) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def add(code, segment, message):
        diags.append(Diagnostic(DIAGNOSTIC_CODES[code], code, segment, message))

    if program.n_atoms != machine.n:
        add("PROGRAM_SHAPE", None, f"program has {program.n_atoms} atoms, machine has {machine.n}")
        return diags

    cavity = "vacuum"  # or ("held", atom) or "unknown"
    prev = (0.0,) * machine.n
    seg_idx = -1
    for item in program.items:
        if isinstance(item, MeasureDirective):
            if not 0 <= item.atom < machine.n:
                add("ATOM_RANGE", seg_idx if seg_idx >= 0 else None, f"measure addresses atom {item.atom}")
            if cavity != "vacuum":
                add("CAVITY_NOT_VACUUM", seg_idx if seg_idx >= 0 else None,
                    f"measurement of atom {item.atom} while the cavity may hold a photon")
            continue
        seg_idx += 1
        seg = item
        if len(seg.stark_voltages) != machine.n:
            add("PROGRAM_SHAPE", seg_idx, f"{len(seg.stark_voltages)} voltages for {machine.n} atoms")
            continue
        try:
            steps = [(v, dt, resonance_report(machine, seg, threshold, v)) for v, dt in ramp_steps(seg, prev)]
        except UnphysicalVoltageError as exc:
            add("UNPHYSICAL_VOLTAGE", seg_idx, str(exc))
            prev = seg.stark_voltages
            cavity = "unknown"
            continue
        seen = set()
        for volts, dt, rep in steps:
            cav, las = rep.cavity_resonances, rep.laser_resonances
            if len(cav) > 1 and "cav" not in seen:
                seen.add("cav")
                add("MULTI_RESONANT", seg_idx,
                    "cavity-resonant: " + ", ".join(f"atom {e.atom} {e.transition}" for e in cav))
            if len(las) > 1 and "las" not in seen:
                seen.add("las")
                add("MULTI_RESONANT", seg_idx,
                    "laser-resonant: " + ", ".join(f"atom {e.atom} {e.transition}" for e in las))
            both = {e.atom for e in cav} & {e.atom for e in las}
            if both and "both" not in seen:
                seen.add("both")
                add("LASER_CAVITY_SAME_ATOM", seg_idx, f"atom(s) {sorted(both)} resonant with laser and cavity")
            for e in las:
                if e.transition == "e0e1" and ("e0e1", e.atom) not in seen:
                    seen.add(("e0e1", e.atom))
                    add("LASER_E0E1_RESONANT", seg_idx, f"laser resonant with atom {e.atom} e0<->e1")
            for e in rep.entries:
                near_c = not e.cavity_resonant and e.cavity_ratio < guard_ratio
                near_l = seg.laser_on and not e.laser_resonant and e.laser_ratio < guard_ratio
                if (near_c or near_l) and ("near", e.atom, e.transition) not in seen:
                    seen.add(("near", e.atom, e.transition))
                    ratio = min(e.cavity_ratio if near_c else math.inf, e.laser_ratio if near_l else math.inf)
                    add("NEAR_RESONANT", seg_idx,
                        f"atom {e.atom} {e.transition} detuned by only {ratio:.3g} Rabi frequencies")
            if dt > 0 and len(cav) == 1:
                cavity = _track_cavity(cavity, cav[0], machine.cavity_rabi(cav[0].transition) * dt / math.pi,
                                       lambda msg: add("MULTI_PHOTON", seg_idx, msg))
            elif dt > 0 and len(cav) > 1:
                cavity = "unknown"
        if seg.ramp_steps > 0:
            for j, atom in enumerate(machine.atoms):
                for tr in TRANSITION_NAMES:
                    w0 = transition_frequency(atom, tr, prev[j])
                    w1 = transition_frequency(atom, tr, seg.stark_voltages[j])
                    checks = [("cavity", machine.cavity.omega_c, machine.cavity_rabi(tr))]
                    if seg.laser_on:
                        checks.append(("laser", machine.laser.omega_l, machine.laser_rabi(j, tr, seg.laser_E0)))
                    for what, target, rabi in checks:
                        dwell = _crossing_dwell(w0, w1, target, rabi, seg.duration)
                        if dwell is not None and dwell >= dwell_factor / rabi:
                            add("CROSSING_DWELL", seg_idx,
                                f"atom {j} {tr} crosses the {what} resonance with dwell {dwell:.3g} s "
                                f"(= {dwell * rabi:.3g}/Omega)")
        prev = seg.stark_voltages

    if cavity != "vacuum":
        add("CAVITY_NOT_VACUUM", seg_idx if seg_idx >= 0 else None, "cavity may hold a photon at program end")

    if not any(d.code == "UNPHYSICAL_VOLTAGE" for d in diags):
        budget = coherence_budget(machine, program, threshold)
        if budget.coherence_ratio < min_coherence_ratio:
            add("LOW_COHERENCE", None,
                f"coherence time / program duration = {budget.coherence_ratio:.3g} < {min_coherence_ratio}")
    return diags


def _track_cavity(cavity, entry, k: float, report_multi):
    integral = abs(k - round(k)) < 1e-6
    if entry.transition == "e0e1":
        return cavity if integral and round(k) % 2 == 0 else "unknown"
    if not integral:
        return "unknown"
    if round(k) % 2 == 0:
        return cavity
    if cavity == "vacuum":
        return ("held", entry.atom)
    if cavity == ("held", entry.atom):
        return "vacuum"
    if cavity != "unknown":
        report_multi(f"atom {entry.atom} swaps into a cavity holding atom {cavity[1]}'s excitation")
    return "unknown"
