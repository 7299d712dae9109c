"""
Time evolution of states under pulse programs, plus off-resonance analytics.

Physical mode exponentiates the full segment Hamiltonian (exact for
piecewise-constant control). Ideal mode replaces every resonant coupling by
its closed-form block unitary and keeps only the diagonal frame evolution.
Both modes work in the laser rotating frame, so their raw states are directly
comparable; :meth:`RunReport.qubit_frame_state` additionally removes the bare
(diagonal) frame phases accumulated by each level.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import protocol, qstate
from .errors import ContractViolation, ProgramInvalid
from .machine import (
    MachineConfig,
    MeasureDirective,
    PulseProgram,
    ScheduleSegment,
    assemble_hamiltonian,
    diagonal_energies,
    frame_detunings,
    ramp_steps,
    resonance_report,
)
from .qstate import StateVector


class RunMode(str, Enum):
    IDEAL = "ideal"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class FramePhases:
    """Accumulated bare phase angles of e0, e1 (per atom) and of one photon."""

    e0: tuple[float, ...]
    e1: tuple[float, ...]
    photon: float = 0.0

    @classmethod
    def zero(cls, n: int) -> "FramePhases":
        return cls((0.0,) * n, (0.0,) * n, 0.0)

    def advance(self, machine: MachineConfig, voltages: Sequence[float], dt: float) -> "FramePhases":
        d_e0, d_e1, d_c = frame_detunings(machine, voltages)
        return FramePhases(
            tuple(np.asarray(self.e0) + d_e0 * dt),
            tuple(np.asarray(self.e1) + d_e1 * dt),
            self.photon + d_c * dt,
        )

    def basis_phases(self, n: int, n_ph: int) -> np.ndarray:
        levels, photons = qstate.level_table(n, n_ph)
        table = np.stack([np.zeros(n), np.asarray(self.e0), np.asarray(self.e1)], axis=1)
        return table[np.arange(n), levels].sum(axis=1) + self.photon * photons


@dataclass(frozen=True)
class MeasurementRecord:
    atom: int
    outcome: int
    probability: float


@dataclass(frozen=True)
class SegmentLogEntry:
    index: int
    duration: float
    resonances: tuple[str, ...]
    elapsed: float


@dataclass(frozen=True)
class OffResonanceBudget:
    spectator_phases: tuple[float, ...]
    timescale_ratios: tuple[float, ...]
    pulse_count: int
    coherence_ratio: float
    total_duration: float
    per_segment: tuple[dict, ...] = ()


@dataclass(frozen=True)
class RunReport:
    final_state: StateVector
    segment_log: tuple[SegmentLogEntry, ...]
    measurements: tuple[MeasurementRecord, ...]
    analytics: OffResonanceBudget
    frame: FramePhases
    mode: str = "ideal"
    seed: int = 0
    histogram: Optional[dict] = None
    outcome_probabilities: Optional[dict] = None

    def qubit_frame_state(self) -> StateVector:
        st = self.final_state
        phases = self.frame.basis_phases(st.n, st.n_ph)
        return StateVector(np.exp(1j * phases) * st.amplitudes, st.n, st.n_ph)


# --- analytics ------------------------------------------------------------

def timescale_ratio(delta: float, Omega_c: float) -> float:
    """tau_off / tau_on = sqrt((delta/Omega_c)^2 + 1)."""
    if not Omega_c > 0:
        raise ContractViolation("Omega_c must be positive")
    return math.sqrt((delta / Omega_c) ** 2 + 1.0)


def spectator_phase_rate(Omega_c: float, delta: float) -> float:
    """Second-order dressed shift (Omega_c/2)^2 / delta of a detuned level, in rad/s."""
    if delta == 0:
        raise ContractViolation("spectator phase rate is undefined on resonance")
    return (0.5 * Omega_c) ** 2 / delta


def dressed_level_shift(Omega_c: float, delta: float) -> float:
    """Exact shift (delta/2)(sqrt(1 + (Omega_c/delta)^2) - 1) of the detuned dressed level."""
    if delta == 0:
        raise ContractViolation("dressed shift is undefined on resonance")
    return 0.5 * delta * (math.sqrt(1.0 + (Omega_c / delta) ** 2) - 1.0)


def _program_steps(program: PulseProgram):
    """Yield (segment index, segment, step voltages, dt) over all ramp sub-steps."""
    prev = (0.0,) * program.n_atoms
    for idx, seg in enumerate(program.segments):
        for volts, dt in ramp_steps(seg, prev):
            yield idx, seg, volts, dt
        prev = seg.stark_voltages


def coherence_budget(machine: MachineConfig, program: PulseProgram, threshold: float = 1.0) -> OffResonanceBudget:
    n = machine.n
    phases = np.zeros(n)
    ratios = np.full(n, math.inf)
    pulsed = set()
    per_segment: dict[int, dict] = {}
    for idx, seg, volts, dt in _program_steps(program):
        rep = resonance_report(machine, seg, threshold, volts)
        if dt > 0 and (rep.cavity_resonances or rep.laser_resonances):
            pulsed.add(idx)
        row = per_segment.setdefault(
            idx, {"index": idx, "duration": seg.duration, "pulse": False, "spectator_phase": [0.0] * n}
        )
        row["pulse"] = idx in pulsed
        for e in rep.entries:
            om_c = machine.cavity_rabi(e.transition)
            if e.transition == "ge0" and not e.cavity_resonant:
                ratios[e.atom] = min(ratios[e.atom], timescale_ratio(e.delta_cavity, om_c))
            contributions = []
            if abs(e.delta_cavity) > om_c:
                contributions.append(abs(spectator_phase_rate(om_c, e.delta_cavity)))
            om_l = machine.laser_rabi(e.atom, e.transition, seg.laser_E0)
            if seg.laser_on and abs(e.delta_laser) > om_l:
                contributions.append(abs(spectator_phase_rate(om_l, e.delta_laser)))
            acc = sum(contributions) * dt
            phases[e.atom] += acc
            row["spectator_phase"][e.atom] += acc
    if not per_segment:
        park = ScheduleSegment(0.0, (0.0,) * n)
        for e in resonance_report(machine, park, threshold).entries:
            if e.transition == "ge0":
                ratios[e.atom] = timescale_ratio(e.delta_cavity, machine.cavity_rabi("ge0"))
    total = program.total_duration
    t_coh = min(machine.t_coh_atom, machine.t_coh_cavity)
    return OffResonanceBudget(
        spectator_phases=tuple(float(p) for p in phases),
        timescale_ratios=tuple(float(r) for r in ratios),
        pulse_count=len(pulsed),
        coherence_ratio=t_coh / total if total > 0 else math.inf,
        total_duration=total,
        per_segment=tuple(per_segment[i] for i in sorted(per_segment)),
    )


# --- evolution --------------------------------------------------------------

def ideal_step_unitary(
    machine: MachineConfig,
    segment: ScheduleSegment,
    voltages: Sequence[float],
    dt: float,
    threshold: float = 1.0,
) -> np.ndarray:
    """Closed-form resonant pulses composed with the diagonal frame evolution."""
    U = np.eye(machine.dim, dtype=complex)
    if dt == 0:
        return U
    rep = resonance_report(machine, segment, threshold, voltages)
    for e in rep.laser_resonances:
        if e.transition != "ge0":
            continue
        k = machine.laser_rabi(e.atom, "ge0", segment.laser_E0) * dt / math.pi
        U = protocol.laser_pulse_unitary(machine, e.atom, k, segment.laser_phase) @ U
    for e in rep.cavity_resonances:
        k = machine.cavity_rabi(e.transition) * dt / math.pi
        U = protocol.cavity_pulse_unitary(machine, e.atom, e.transition, k) @ U
    phases = np.exp(-1j * diagonal_energies(machine, voltages) * dt)
    return phases[:, None] * U


def _step_unitary(machine, segment, volts, dt, mode, threshold, cache):
    key = (mode, volts, dt, segment.laser_on, segment.laser_phase, segment.laser_E0)
    if cache is not None and key in cache:
        return cache[key]
    if mode == RunMode.PHYSICAL:
        U = qstate.matrix_exponential_hermitian(assemble_hamiltonian(machine, segment, volts), dt)
    else:
        U = ideal_step_unitary(machine, segment, volts, dt, threshold)
    if cache is not None:
        cache[key] = U
    return U


def _check_state(state: StateVector, machine: MachineConfig):
    if state.n != machine.n or state.n_ph != machine.n_ph:
        raise ContractViolation(
            f"state shape (n={state.n}, n_ph={state.n_ph}) does not match machine "
            f"(n={machine.n}, n_ph={machine.n_ph})"
        )


def evolve_segment(
    state: StateVector,
    machine: MachineConfig,
    segment: ScheduleSegment,
    previous_voltages: Optional[Sequence[float]] = None,
    mode: RunMode = RunMode.PHYSICAL,
    threshold: float = 1.0,
) -> StateVector:
    """exp(-i H duration) |state>, composing ramp sub-steps in order when ramped."""
    _check_state(state, machine)
    if len(segment.stark_voltages) != machine.n:
        raise ContractViolation("segment voltages do not match the atom count")
    mode = RunMode(mode)
    prev = (0.0,) * machine.n if previous_voltages is None else tuple(previous_voltages)
    for volts, dt in ramp_steps(segment, prev):
        state = state.evolve(_step_unitary(machine, segment, volts, dt, mode, threshold, None))
    return state


def _require_valid(program: PulseProgram, machine: MachineConfig):
    from .pulsec import validate as validate_program

    diagnostics = validate_program(program, machine)
    if any(d.severity == "error" for d in diagnostics):
        raise ProgramInvalid(diagnostics)


def run_program(
    machine: MachineConfig,
    program: PulseProgram,
    mode: RunMode = RunMode.IDEAL,
    seed: int = 0,
    initial_state: Optional[StateVector] = None,
    rng: Optional[np.random.Generator] = None,
    validate: bool = True,
    threshold: float = 1.0,
    cache: Optional[dict] = None,
) -> RunReport:
    mode = RunMode(mode)
    if program.n_atoms != machine.n:
        raise ContractViolation(f"program has {program.n_atoms} atoms, machine has {machine.n}")
    if validate:
        _require_valid(program, machine)
    rng = np.random.default_rng(seed) if rng is None else rng
    state = StateVector.ground(machine.n, machine.n_ph) if initial_state is None else initial_state
    _check_state(state, machine)

    frame = FramePhases.zero(machine.n)
    prev = (0.0,) * machine.n
    log, records = [], []
    elapsed = 0.0
    seg_index = 0
    for item in program.items:
        if isinstance(item, MeasureDirective):
            result = protocol.measure_protocol(
                machine, item.atom, state, rng, strict=(mode == RunMode.IDEAL)
            )
            state = result.post_state
            records.append(MeasurementRecord(item.atom, result.outcome, result.probability))
            continue
        labels: list[str] = []
        for volts, dt in ramp_steps(item, prev):
            U = _step_unitary(machine, item, volts, dt, mode, threshold, cache)
            state = state.evolve(U)
            frame = frame.advance(machine, volts, dt)
            if dt > 0:
                for lab in resonance_report(machine, item, threshold, volts).labels():
                    if lab not in labels:
                        labels.append(lab)
        elapsed += item.duration
        log.append(SegmentLogEntry(seg_index, item.duration, tuple(labels), elapsed))
        prev = item.stark_voltages
        seg_index += 1

    return RunReport(
        final_state=state,
        segment_log=tuple(log),
        measurements=tuple(records),
        analytics=coherence_budget(machine, program, threshold),
        frame=frame,
        mode=mode.value,
        seed=seed,
    )


# --- shots ------------------------------------------------------------------

def shot_rng(seed: int, shot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(shot,)))


def _terminal_measurements(program: PulseProgram) -> bool:
    seen_measure = False
    for item in program.items:
        if isinstance(item, MeasureDirective):
            seen_measure = True
        elif seen_measure:
            return False
    return True


def run_shots(
    machine: MachineConfig,
    program: PulseProgram,
    mode: RunMode = RunMode.IDEAL,
    seed: int = 0,
    shots: int = 1,
    workers: int = 1,
    validate: bool = True,
) -> RunReport:
    """Run ``shots`` repetitions; shot ``s`` draws from an RNG seeded by (seed, s).

    Measurement-free programs are evolved once. When every measurement comes
    after the last segment the pre-measurement state is computed once and only
    the readouts are re-sampled; otherwise each shot re-runs the whole program
    (propagators are cached across shots). Results are merged by shot index,
    so the output is independent of ``workers``.
    """
    mode = RunMode(mode)
    shots = max(1, int(shots))
    atoms = [m.atom for m in program.measurements]
    strict = mode == RunMode.IDEAL
    if not atoms:
        return run_program(machine, program, mode, seed, rng=shot_rng(seed, 0), validate=validate)

    if _terminal_measurements(program):
        segments_only = PulseProgram(program.n_atoms, tuple(program.segments), program.metadata)
        if validate:
            _require_valid(program, machine)
        base = run_program(machine, segments_only, mode, seed, validate=False)
        pre_state = base.final_state
        exact = protocol.outcome_distribution(machine, pre_state, atoms, strict=strict)

        def one_shot(s: int):
            rng = shot_rng(seed, s)
            st, recs = pre_state, []
            for atom in atoms:
                res = protocol.measure_protocol(machine, atom, st, rng, strict=strict)
                st = res.post_state
                recs.append(MeasurementRecord(atom, res.outcome, res.probability))
            return st, tuple(recs)

        results = _map_shots(one_shot, shots, workers)
        first_state, first_records = results[0]
        report = RunReport(
            final_state=first_state,
            segment_log=base.segment_log,
            measurements=first_records,
            analytics=coherence_budget(machine, program),
            frame=base.frame,
            mode=mode.value,
            seed=seed,
        )
    else:
        cache: dict = {}
        if validate:
            _require_valid(program, machine)

        def one_shot(s: int):
            rep = run_program(machine, program, mode, seed, rng=shot_rng(seed, s), validate=False, cache=cache)
            return rep, rep.measurements

        results = _map_shots(one_shot, shots, workers)
        report = results[0][0]
        exact = None

    histogram: dict[str, int] = {}
    for _, recs in results:
        key = "".join(str(r.outcome) for r in recs)
        histogram[key] = histogram.get(key, 0) + 1
    return RunReport(
        final_state=report.final_state,
        segment_log=report.segment_log,
        measurements=report.measurements,
        analytics=report.analytics,
        frame=report.frame,
        mode=report.mode,
        seed=seed,
        histogram=dict(sorted(histogram.items())),
        outcome_probabilities=exact,
    )


def _map_shots(fn, shots: int, workers: int) -> list:
    if workers <= 1:
        return [fn(s) for s in range(shots)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(shots)))
