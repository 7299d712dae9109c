"""
Closed-form resonant pulse unitaries and the gate protocols built from them.

Laser pulse on atom ``m`` (duration ``k*pi/Omega_l``), acting on {g, e0}::

    V(k, phi) = exp(-i k pi/2 (s+ e^{-i phi} + s- e^{i phi}))

Cavity pulse on atom ``m`` (duration ``k*pi/Omega_c``) rotates each resonant
block {|upper, p>, |lower, p+1>} by ``theta = k pi/2 sqrt(p+1)``::

    |upper, p>   -> cos(theta) |upper, p> - sin(theta) |lower, p+1>
    |lower, p+1> -> cos(theta) |lower, p+1> + sin(theta) |upper, p>

which is exactly exp(-i H t) of the coupling ``i (Omega_c/2)(s+ a - s- a^dag)``.

Circuit-level rotations use the textbook convention in the (g, e0) basis,
``RX(theta, phi) = exp(-i theta/2 (cos(phi) X + sin(phi) Y))``. The laser axis
of ``V(k, phi)`` is ``cos(phi) X - sin(phi) Y``, so a circuit axis ``phi`` is
driven with laser phase ``-phi``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qstate
from .errors import ContractViolation, ProtocolViolation
from .machine import MachineConfig
from .qstate import E0, E1, G, StateVector

TWO_PI = 2.0 * math.pi
VACUUM_TOL = 1e-10


def wrap_phase(phi: float) -> float:
    out = math.fmod(phi, TWO_PI)
    if out < 0:
        out += TWO_PI
    if abs(out - TWO_PI) < 1e-15:
        out = 0.0
    return out


def laser_phase_for_axis(phi: float) -> float:
    """Laser phase driving the circuit-convention xy axis ``phi``."""
    return wrap_phase(-phi)


@dataclass(frozen=True)
class PulseSpec:
    kind: str  # "laser" | "cavity"
    atom: int
    k: float
    transition: str = "ge0"
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("laser", "cavity"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if not self.k > 0:
            raise ValueError(f"pulse area multiplier must be positive, got {self.k}")
        if self.kind == "cavity" and self.phase != 0.0:
            raise ValueError("cavity pulses carry no laser phase")
        if self.kind == "laser" and self.transition != "ge0":
            raise ValueError("laser pulses address the g<->e0 transition only")

    def rabi(self, machine: MachineConfig) -> float:
        if self.kind == "laser":
            return machine.laser_rabi(self.atom, "ge0")
        return machine.cavity_rabi(self.transition)

    def duration(self, machine: MachineConfig) -> float:
        return self.k * math.pi / self.rabi(machine)


@dataclass(frozen=True)
class Gate:
    """Abstract gate: name in {rx, rz, h, cz, cnot, measure}."""

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()


@dataclass(frozen=True)
class PhaseCorrection:
    atom: int
    e0_phase: float
    residual_phase: float = 0.0


@dataclass(frozen=True)
class CPhaseSequence:
    pulses: tuple[PulseSpec, ...]
    correction: PhaseCorrection

    @property
    def raw(self) -> tuple[PulseSpec, ...]:
        return self.pulses[:3]


@dataclass(frozen=True)
class FidelityReport:
    overlap_fidelity: float
    gate_fidelity: float
    up_to_local_phase: bool
    local_phases: tuple[float, ...] = ()


def laser_pulse_site_matrix(k: float, phase: float) -> np.ndarray:
    c = math.cos(k * math.pi / 2)
    s = math.sin(k * math.pi / 2)
    m = np.eye(3, dtype=complex)
    m[G, G] = c
    m[E0, E0] = c
    m[G, E0] = -1j * s * np.exp(1j * phase)
    m[E0, G] = -1j * s * np.exp(-1j * phase)
    return m


def laser_pulse_unitary(machine: MachineConfig, atom: int, k: float, phase: float) -> np.ndarray:
    if not k > 0:
        raise ContractViolation("pulse area multiplier must be positive")
    return qstate.embed_site_operator(laser_pulse_site_matrix(k, phase), atom, machine.n, machine.n_ph)


def cavity_pulse_unitary(machine: MachineConfig, atom: int, transition: str, k: float) -> np.ndarray:
    if not k > 0:
        raise ContractViolation("pulse area multiplier must be positive")
    n, n_ph = machine.n, machine.n_ph
    upper, lower = (E0, G) if transition == "ge0" else (E1, E0)
    levels, photons = qstate.level_table(n, n_ph)
    U = np.eye(machine.dim, dtype=complex)
    stride = 3 ** (n - 1 - atom) * (n_ph + 1)
    for u in np.nonzero((levels[:, atom] == upper) & (photons < n_ph))[0]:
        p = int(photons[u])
        l = u - (upper - lower) * stride + 1
        theta = 0.5 * k * math.pi * math.sqrt(p + 1)
        c, s = math.cos(theta), math.sin(theta)
        U[u, u] = c
        U[l, l] = c
        U[l, u] = -s
        U[u, l] = s
    return U


def pulse_unitary(machine: MachineConfig, pulse: PulseSpec) -> np.ndarray:
    if pulse.kind == "laser":
        return laser_pulse_unitary(machine, pulse.atom, pulse.k, pulse.phase)
    return cavity_pulse_unitary(machine, pulse.atom, pulse.transition, pulse.k)


def sequence_unitary(machine: MachineConfig, pulses: Sequence[PulseSpec]) -> np.ndarray:
    U = np.eye(machine.dim, dtype=complex)
    for pulse in pulses:
        U = pulse_unitary(machine, pulse) @ U
    return U


def apply_pulses(
    machine: MachineConfig, state: StateVector, pulses: Sequence[PulseSpec], require_vacuum: bool = False
) -> StateVector:
    if require_vacuum and state.photon_number_expectation() > VACUUM_TOL:
        raise ProtocolViolation("cavity must be in vacuum before this sequence")
    for pulse in pulses:
        state = state.evolve(pulse_unitary(machine, pulse))
    return state


def swap_atom_cavity(machine: MachineConfig, atom: int) -> list[PulseSpec]:
    """Cavity pi pulse on g<->e0: a|g,0> + b|e0,0> -> |g> (x) (a|0> - b|1>)."""
    return [PulseSpec("cavity", atom, 1.0, "ge0")]


def z_correction_pulses(atom: int, e0_phase: float) -> list[PulseSpec]:
    """Two laser pi pulses equal, up to global phase, to diag(1, e^{i e0_phase}) on {g, e0}.

    V(1, b) V(1, a) = -diag(e^{i(b-a)}, e^{-i(b-a)}), so b - a = -e0_phase/2.
    """
    return [
        PulseSpec("laser", atom, 1.0, "ge0", 0.0),
        PulseSpec("laser", atom, 1.0, "ge0", wrap_phase(-0.5 * e0_phase)),
    ]


def cphase(
    machine: MachineConfig, control: int, target: int, residual_phase: float = 0.0
) -> CPhaseSequence:
    """SWAP -> 2pi(e0<->e1) -> SWAP, then a Z correction on the control.

    The three cavity pulses give diag(1, 1, -e^{i r}, e^{i r}) on
    (gg, g e0, e0 g, e0 e0), where ``r`` is any residual frame phase picked up by
    the control's photon path between the swaps (``r = 0`` without frame
    evolution). Multiplying the control's e0 by ``-e^{-i r}`` leaves
    diag(1, 1, 1, -1).
    """
    if control == target:
        raise ContractViolation("cphase needs two distinct atoms")
    for atom in (control, target):
        if not 0 <= atom < machine.n:
            raise ContractViolation(f"atom {atom} outside [0, {machine.n})")
    raw = [
        *swap_atom_cavity(machine, control),
        PulseSpec("cavity", target, 2.0, "e0e1"),
        *swap_atom_cavity(machine, control),
    ]
    e0_phase = wrap_phase(math.pi - residual_phase)
    correction = PhaseCorrection(control, e0_phase, residual_phase)
    return CPhaseSequence(tuple(raw + z_correction_pulses(control, e0_phase)), correction)


def cnot(machine: MachineConfig, control: int, target: int) -> list[Gate]:
    """CNOT = RY(pi/2)_t . CZ . RY(-pi/2)_t."""
    if control == target:
        raise ContractViolation("cnot needs two distinct atoms")
    return [
        Gate("rx", (target,), (math.pi / 2, 3 * math.pi / 2)),
        Gate("cz", (control, target)),
        Gate("rx", (target,), (math.pi / 2, math.pi / 2)),
    ]


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome: int
    post_state: StateVector
    probability: float


def measurement_branches(machine: MachineConfig, atom: int, state: StateVector, strict: bool = True):
    """All (photon count, probability, post-state) branches of a swap-and-detect readout."""
    if strict and state.photon_number_expectation() > VACUUM_TOL:
        raise ProtocolViolation("measurement requires the cavity in vacuum")
    swapped = cavity_pulse_unitary(machine, atom, "ge0", 1.0) @ state.amplitudes
    _, photons = qstate.level_table(machine.n, machine.n_ph)
    branches = []
    for count in range(machine.n_ph + 1):
        mask = photons == count
        prob = float(np.sum(np.abs(swapped[mask]) ** 2))
        if prob <= 1e-15:
            continue
        post = np.zeros_like(swapped)
        # Detection absorbs the photons: |..., count> -> |..., 0>.
        post[np.nonzero(mask)[0] - count] = swapped[mask] / math.sqrt(prob)
        branches.append((count, prob, StateVector(post, machine.n, machine.n_ph)))
    return branches


def measure_protocol(
    machine: MachineConfig, atom: int, state: StateVector, rng: np.random.Generator, strict: bool = True
) -> MeasurementOutcome:
    """Swap the qubit into the cavity, detect the photon (destructively), collapse.

    Outcome 1 means at least one photon was detected. The atom is left in
    ``g`` in either case, since its excitation was carried off by the photon.
    """
    branches = measurement_branches(machine, atom, state, strict)
    draw = rng.random()
    acc = 0.0
    chosen = branches[-1]
    for branch in branches:
        acc += branch[1]
        if draw < acc:
            chosen = branch
            break
    count, _, post = chosen
    outcome = int(count > 0)
    p_outcome = sum(b[1] for b in branches if int(b[0] > 0) == outcome)
    return MeasurementOutcome(outcome, post, min(1.0, p_outcome))


def outcome_distribution(
    machine: MachineConfig, state: StateVector, atoms: Sequence[int], strict: bool = False
) -> dict[str, float]:
    """Exact joint distribution of sequential readouts of ``atoms``, keyed by bit string."""
    dist: dict[str, float] = {}

    def recurse(st: StateVector, remaining: Sequence[int], prefix: str, weight: float):
        if not remaining:
            dist[prefix] = dist.get(prefix, 0.0) + weight
            return
        for count, prob, post in measurement_branches(machine, remaining[0], st, strict):
            recurse(post, remaining[1:], prefix + str(int(count > 0)), weight * prob)

    recurse(state, list(atoms), "", 1.0)
    return dict(sorted(dist.items()))


def _phase_patterns(dim: int, n: Optional[int], n_ph: Optional[int]) -> np.ndarray:
    """0/1 matrix (dim, n): whether basis state has atom j in e0."""
    if n is None:
        n = int(round(math.log2(dim)))
    if dim == 2**n:
        q = np.arange(dim)
        return np.stack([(q >> (n - 1 - j)) & 1 for j in range(n)], axis=1)
    if n_ph is not None and dim == qstate.dimension(n, n_ph):
        levels, _ = qstate.level_table(n, n_ph)
        return (levels == E0).astype(np.int64)
    raise ContractViolation(f"cannot infer local structure for dimension {dim}")


def _maximize_local_phases(diag_terms: np.ndarray, patterns: np.ndarray, atoms: Sequence[int]):
    """Maximize |sum_i c_i exp(i alpha . b_i)| over the phases alpha of ``atoms``."""
    best_val, best_alpha = abs(diag_terms.sum()), np.zeros(len(atoms))
    starts = itertools.product([0.0, math.pi / 2, math.pi, 3 * math.pi / 2], repeat=len(atoms))
    for start in itertools.islice(starts, 256):
        alpha = np.array(start, dtype=float)
        for _ in range(200):
            prev = alpha.copy()
            for idx, j in enumerate(atoms):
                others = np.delete(np.arange(len(atoms)), idx)
                phase = np.exp(1j * (patterns[:, [atoms[o] for o in others]] @ alpha[others]))
                terms = diag_terms * phase
                on = patterns[:, j] == 1
                A, B = terms[~on].sum(), terms[on].sum()
                if abs(B) > 0:
                    alpha[idx] = np.angle(A) - np.angle(B) if abs(A) > 0 else 0.0
            if np.max(np.abs(np.angle(np.exp(1j * (alpha - prev))))) < 1e-14:
                break
        val = abs(np.sum(diag_terms * np.exp(1j * (patterns[:, list(atoms)] @ alpha))))
        if val > best_val + 1e-15:
            best_val, best_alpha = val, alpha
    return best_val, best_alpha


def gate_fidelity(
    U_actual,
    U_ideal,
    up_to_local_phase: bool = False,
    atoms: Optional[Sequence[int]] = None,
    n: Optional[int] = None,
    n_ph: Optional[int] = None,
) -> FidelityReport:
    """|Tr(U_ideal^dag U_actual)| / d, optionally maximized over local Z phases.

    Local phases multiply the e0 component of each listed atom (all atoms by
    default) by a free phase; the dimension must be 2**n or 3**n (n_ph+1).
    """
    U_actual = np.asarray(U_actual, dtype=complex)
    U_ideal = np.asarray(U_ideal, dtype=complex)
    if U_actual.shape != U_ideal.shape or U_actual.ndim != 2:
        raise ContractViolation(f"dimension mismatch: {U_actual.shape} vs {U_ideal.shape}")
    d = U_actual.shape[0]
    phases: tuple[float, ...] = ()
    if up_to_local_phase:
        patterns = _phase_patterns(d, n, n_ph)
        atoms = list(range(patterns.shape[1])) if atoms is None else list(atoms)
        # Tr(U_ideal^dag D U_actual) = sum_i D_ii (U_actual U_ideal^dag)_ii
        diag_terms = np.einsum("ij,ij->i", U_actual, U_ideal.conj())
        value, alpha = _maximize_local_phases(diag_terms, patterns, atoms)
        phases = tuple(float(wrap_phase(a)) for a in alpha)
    else:
        value = abs(np.trace(U_ideal.conj().T @ U_actual))
    f = min(1.0, value / d)
    return FidelityReport(overlap_fidelity=f * f, gate_fidelity=f, up_to_local_phase=up_to_local_phase,
                          local_phases=phases)


def qubit_block(U: np.ndarray, n: int, n_ph: int) -> np.ndarray:
    """Restriction of a full-space operator to the qubit subspace (g/e0, photon 0)."""
    idx = qstate.qubit_subspace_indices(n, n_ph)
    return U[np.ix_(idx, idx)]
