import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavityqc import machine as mc
from cavityqc import qstate
from cavityqc.dynamics import (
    RunMode,
    coherence_budget,
    dressed_level_shift,
    evolve_segment,
    run_program,
    run_shots,
    shot_rng,
    spectator_phase_rate,
    timescale_ratio,
)
from cavityqc.errors import ContractViolation, ProgramInvalid
from cavityqc.machine import PulseProgram, ScheduleSegment
from cavityqc.pulsec import Circuit, compile_circuit
from cavityqc.protocol import Gate
from cavityqc.qstate import E0, G, BasisLabel, StateVector
from conftest import toy_machine


def rk4(psi, steps):
    """Fixed-step 4th-order Runge-Kutta for d psi/dt = -i H psi over [(H, dt), ...]."""
    for H, dt in steps:
        n = max(1, int(math.ceil(dt / 1e-3)))
        h = dt / n
        f = lambda y: -1j * (H @ y)
        for _ in range(n):
            k1 = f(psi)
            k2 = f(psi + 0.5 * h * k1)
            k3 = f(psi + 0.5 * h * k2)
            k4 = f(psi + h * k3)
            psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def random_state(rng, n, n_ph=1):
    d = qstate.dimension(n, n_ph)
    a = rng.normal(size=d) + 1j * rng.normal(size=d)
    return StateVector(a / np.linalg.norm(a), n, n_ph)


def detuned_machine(delta, Omega):
    """One atom whose ge0 line sits ``delta`` below the cavity at 0 V; laser parked far away."""
    atom = mc.AtomLevels(5.0e10, 5.02e10, 1e7, 2e7)
    return mc.MachineConfig(
        (atom,), mc.CavityConfig(5.0e10 + delta, Omega, Omega, 1), mc.LaserConfig(4.0e10, 1.0), name="det"
    )


def test_zero_duration_is_identity(toy):
    m = toy()
    psi = random_state(np.random.default_rng(0), 1)
    out = evolve_segment(psi, m, ScheduleSegment(0.0, (0.5,), laser_on=True))
    assert np.allclose(out.amplitudes, psi.amplitudes)


def test_dimension_mismatch(toy, rydberg):
    with pytest.raises(ContractViolation):
        evolve_segment(StateVector.ground(1), rydberg, ScheduleSegment(1.0, (0.0, 0.0)))
    with pytest.raises(ContractViolation):
        evolve_segment(StateVector.ground(2), rydberg, ScheduleSegment(1.0, (0.0,)))


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 2**31),
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
    st.booleans(),
    st.floats(0, 2 * math.pi),
    st.floats(0.1, 3.0),
    st.integers(0, 3),
)
def test_evolve_segment_matches_rk4(seed, v_prev, v, laser_on, phase, duration, ramp):
    m = toy_machine()
    rng = np.random.default_rng(seed)
    psi = random_state(rng, 1)
    seg = ScheduleSegment(duration, (v,), laser_on=laser_on, laser_phase=phase, ramp_steps=ramp)
    out = evolve_segment(psi, m, seg, previous_voltages=(v_prev,))
    steps = [(mc.assemble_hamiltonian(m, seg, volts), dt) for volts, dt in mc.ramp_steps(seg, (v_prev,))]
    ref = rk4(psi.amplitudes, steps)
    assert np.max(np.abs(out.amplitudes - ref)) < 1e-6


@pytest.mark.parametrize("n_ph", [1, 2])
def test_resonant_swap(n_ph):
    m = detuned_machine(0.0, 4e5).with_photon_cutoff(n_ph)
    psi = StateVector.basis(BasisLabel((E0,), 0), 1, n_ph)
    out = evolve_segment(psi, m, ScheduleSegment(math.pi / 4e5, (0.0,)))
    assert abs(out.amplitude(BasisLabel((G,), 1))) ** 2 == pytest.approx(1.0, abs=1e-9)


def max_transfer(delta, Omega, samples=4001):
    m = detuned_machine(delta, Omega)
    H = mc.assemble_hamiltonian(m, ScheduleSegment(1.0, (0.0,)))
    evals, evecs = np.linalg.eigh(H)
    psi0 = np.zeros(m.dim, complex)
    psi0[qstate.basis_index(BasisLabel((E0,), 0), 1, 1)] = 1
    target = qstate.basis_index(BasisLabel((G,), 1), 1, 1)
    c = evecs.conj().T @ psi0
    ts = np.linspace(0, 2 * math.pi / math.hypot(delta, Omega), samples)
    amps = (evecs[target] * c) @ np.exp(-1j * np.outer(evals, ts))
    return float(np.max(np.abs(amps) ** 2))


@pytest.mark.parametrize("ratio", [0, 1, 3, 10])
def test_detuned_rabi_law(ratio):
    Omega = 4e5
    expected = Omega**2 / (Omega**2 + (ratio * Omega) ** 2)
    assert max_transfer(ratio * Omega, Omega) == pytest.approx(expected, rel=1e-2)


def test_rydberg_reference_detuning():
    assert max_transfer(4e6, 4e5) == pytest.approx(1 / 101, rel=1e-2)
    assert timescale_ratio(4e6, 4e5) == pytest.approx(math.sqrt(101), rel=1e-3)


def test_timescale_ratio():
    assert timescale_ratio(0, 1.0) == 1
    assert timescale_ratio(3.0, 1.0) == pytest.approx(math.sqrt(10))
    with pytest.raises(ContractViolation):
        timescale_ratio(1.0, 0.0)


def test_spectator_phase_rate():
    assert spectator_phase_rate(4e5, 4e6) == pytest.approx(1.0e4)
    assert spectator_phase_rate(0.0, 4e6) == 0
    with pytest.raises(ContractViolation):
        spectator_phase_rate(4e5, 0.0)
    exact = dressed_level_shift(4e5, 4e6)
    assert abs(exact - 1e4) / 1e4 < 3e-3


def test_spectator_phase_against_eigenvalues():
    # independent oracle: eigenvalue of the {|e0,0>, |g,1>} block
    Omega, delta = 4e5, 4e6
    block = np.array([[delta, 0.5j * Omega], [-0.5j * Omega, 0.0]])
    shift = np.linalg.eigvalsh(block)[-1] - delta
    t = math.pi / Omega
    assert abs(shift) * t == pytest.approx(spectator_phase_rate(Omega, delta) * t, rel=2e-2)


def test_coherence_budget(rydberg):
    empty = coherence_budget(rydberg, PulseProgram(2))
    assert empty.pulse_count == 0 and empty.spectator_phases == (0.0, 0.0)
    V = mc.stark_voltage_for(rydberg.atoms[0], "ge0", rydberg.cavity.omega_c)
    pulse = ScheduleSegment(math.pi / 4e5, (V, 0.0))
    one = coherence_budget(rydberg, PulseProgram(2, (pulse,)))
    assert one.pulse_count == 1
    assert one.coherence_ratio == pytest.approx(1e6, rel=1e-2)
    assert all(p >= 0 for p in one.spectator_phases)
    two = coherence_budget(rydberg, PulseProgram(2, (pulse, ScheduleSegment(1e-6, (0.0, 0.0)), pulse)))
    assert two.pulse_count == 2


def test_empty_program_returns_ground(rydberg):
    rep = run_program(rydberg, PulseProgram(2))
    assert rep.final_state.amplitude(BasisLabel((G, G), 0)) == 1
    assert rep.segment_log == ()


def test_pi_pulse_ideal_and_physical(rydberg):
    prog = compile_circuit(Circuit(2, (Gate("rx", (0,), (math.pi, 0.0)),)), rydberg)
    ideal = run_program(rydberg, prog, RunMode.IDEAL).qubit_frame_state()
    assert ideal.amplitude(BasisLabel((E0, G), 0)) == pytest.approx(-1j, abs=1e-12)
    phys = run_program(rydberg, prog, RunMode.PHYSICAL)
    assert phys.final_state.level_population(1, G) > 1 - 1e-2
    assert phys.qubit_frame_state().fidelity(ideal) > 0.999


def test_segment_log_accumulates(rydberg):
    prog = compile_circuit(Circuit(2, (Gate("h", (0,)), Gate("cz", (0, 1)))), rydberg)
    rep = run_program(rydberg, prog)
    assert rep.segment_log[-1].elapsed == pytest.approx(prog.total_duration)
    assert all(len(e.resonances) == 1 for e in rep.segment_log)


def test_invalid_program_rejected(rydberg):
    V = mc.stark_voltage_for(rydberg.atoms[0], "ge0", rydberg.cavity.omega_c)
    bad = PulseProgram(2, (ScheduleSegment(1e-6, (V, V)),))
    with pytest.raises(ProgramInvalid):
        run_program(rydberg, bad)
    run_program(rydberg, bad, RunMode.PHYSICAL, validate=False)


def random_laser_off_program(rng, m):
    items = []
    targets = [mc.stark_voltage_for(m.atoms[0], "ge0", m.cavity.omega_c),
               mc.stark_voltage_for(m.atoms[0], "e0e1", m.cavity.omega_c), 0.0]
    for _ in range(rng.integers(1, 5)):
        volts = tuple(float(rng.choice(targets)) + rng.normal(scale=0.1) for _ in range(m.n))
        items.append(ScheduleSegment(float(rng.uniform(0, 2e-5)), volts, ramp_steps=int(rng.integers(0, 3))))
    return PulseProgram(m.n, tuple(items))


@pytest.mark.parametrize("seed", range(5))
def test_physical_mode_conserves_norm_and_excitations(rydberg, seed):
    rng = np.random.default_rng(seed)
    prog = random_laser_off_program(rng, rydberg)
    psi = random_state(rng, 2)
    rep = run_program(rydberg, prog, RunMode.PHYSICAL, initial_state=psi, validate=False)
    out = rep.final_state
    assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-9
    assert abs(out.excitation_expectation() - psi.excitation_expectation()) < 1e-9


def test_shots_deterministic_across_workers(rydberg):
    c = Circuit(2, (Gate("h", (0,)), Gate("cnot", (0, 1)), Gate("measure", (0,)), Gate("measure", (1,))))
    prog = compile_circuit(c, rydberg)
    a = run_shots(rydberg, prog, seed=3, shots=200, workers=1)
    b = run_shots(rydberg, prog, seed=3, shots=200, workers=4)
    assert a.histogram == b.histogram
    assert set(a.histogram) <= {"00", "11"}
    assert a.outcome_probabilities == pytest.approx({"00": 0.5, "11": 0.5})


def test_shots_with_mid_circuit_measurement(rydberg):
    c = Circuit(2, (Gate("h", (0,)), Gate("measure", (0,)), Gate("rx", (1,), (math.pi, 0.0)), Gate("measure", (1,))))
    prog = compile_circuit(c, rydberg)
    a = run_shots(rydberg, prog, seed=9, shots=100, workers=3)
    b = run_shots(rydberg, prog, seed=9, shots=100, workers=1)
    assert a.histogram == b.histogram
    assert set(a.histogram) <= {"01", "11"}
    assert a.outcome_probabilities is None


def test_measurement_free_shots_run_once(rydberg):
    prog = compile_circuit(Circuit(2, (Gate("h", (0,)),)), rydberg)
    rep = run_shots(rydberg, prog, shots=50)
    assert rep.histogram is None and rep.measurements == ()


def test_shot_rngs_independent():
    assert shot_rng(1, 0).random() != shot_rng(1, 1).random()
    assert shot_rng(1, 5).random() == shot_rng(1, 5).random()
