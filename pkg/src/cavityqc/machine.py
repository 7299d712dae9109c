"""
Physical device model and rotating-frame Hamiltonian assembly.

All frequencies are angular (rad/s) with hbar = 1. The frame rotates at the
laser frequency on every quantum: ``g`` carries 0 quanta, ``e0`` one, ``e1``
two, and each cavity photon one. In that frame every retained coupling is
time independent under the rotating-wave approximation, so each schedule
segment has a constant Hamiltonian::

    H = sum_j [d_e0_j |e0><e0|_j + d_e1_j |e1><e1|_j] + d_c a^dag a
        + sum_j,tr (Oc_tr/2) (i s+_tr,j a - i s-_tr,j a^dag)
        + [laser on] sum_j,tr (Ol_tr,j/2) (s+_tr,j e^{-i phi} + s-_tr,j e^{i phi})

with ``d_e0 = w_ge0(V) - w_l``, ``d_e1 = w_ge0(V) + w_e0e1(V) - 2 w_l`` and
``d_c = w_c - w_l``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np

from . import qstate
from .errors import MachineConfigError, UnphysicalVoltageError, UntunableTransitionError

Transition = Literal["ge0", "e0e1"]
TRANSITION_NAMES: tuple[str, ...] = ("ge0", "e0e1")
PRESETS = ("rydberg", "qdot")


@dataclass(frozen=True)
class AtomLevels:
    omega_ge0_0: float
    omega_e0e1_0: float
    alpha_ge0: float
    alpha_e0e1: float
    mu_ge0: float = 1.0
    mu_e0e1: float = 1.0

    def zero_field(self, transition: str) -> float:
        return self.omega_ge0_0 if transition == "ge0" else self.omega_e0e1_0

    def slope(self, transition: str) -> float:
        return self.alpha_ge0 if transition == "ge0" else self.alpha_e0e1

    def dipole(self, transition: str) -> float:
        return self.mu_ge0 if transition == "ge0" else self.mu_e0e1


@dataclass(frozen=True)
class CavityConfig:
    omega_c: float
    Omega_c_ge0: float
    Omega_c_e0e1: float
    n_ph: int = 1

    def rabi(self, transition: str) -> float:
        return self.Omega_c_ge0 if transition == "ge0" else self.Omega_c_e0e1


@dataclass(frozen=True)
class LaserConfig:
    omega_l: float
    E0: float


@dataclass(frozen=True)
class MachineConfig:
    atoms: tuple[AtomLevels, ...]
    cavity: CavityConfig
    laser: LaserConfig
    t_coh_atom: float = math.inf
    t_coh_cavity: float = math.inf
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if len(self.atoms) < 1:
            raise MachineConfigError("a machine needs at least one atom")
        if self.cavity.n_ph < 1:
            raise MachineConfigError("photon cutoff must be at least 1")

    @property
    def n(self) -> int:
        return len(self.atoms)

    @property
    def n_ph(self) -> int:
        return self.cavity.n_ph

    @property
    def dim(self) -> int:
        return qstate.dimension(self.n, self.n_ph)

    def laser_rabi(self, atom: int, transition: str = "ge0", E0: Optional[float] = None) -> float:
        """Omega_l = E0 * mu for the given atom and transition."""
        field_amp = self.laser.E0 if E0 is None else E0
        return field_amp * self.atoms[atom].dipole(transition)

    def cavity_rabi(self, transition: str = "ge0") -> float:
        return self.cavity.rabi(transition)

    def with_atoms(self, n: int) -> "MachineConfig":
        """Resize to ``n`` atoms, replicating the first atom's levels where new atoms are needed."""
        atoms = list(self.atoms[:n]) + [self.atoms[0]] * max(0, n - self.n)
        return replace(self, atoms=tuple(atoms))

    def with_photon_cutoff(self, n_ph: int) -> "MachineConfig":
        return replace(self, cavity=replace(self.cavity, n_ph=n_ph))

    def check_invariants(self) -> "MachineConfig":
        """Enforce the device frequency ordering w_ge0 < w_e0e1 < w_l < w_c at zero field."""
        c, l = self.cavity, self.laser
        if not (c.Omega_c_ge0 > 0 and c.Omega_c_e0e1 > 0):
            raise MachineConfigError("vacuum Rabi frequencies must be positive")
        if not (self.t_coh_atom > 0 and self.t_coh_cavity > 0):
            raise MachineConfigError("coherence times must be positive")
        if not l.omega_l < c.omega_c:
            raise MachineConfigError("laser frequency must lie below the cavity frequency")
        for j, atom in enumerate(self.atoms):
            values = (atom.omega_ge0_0, atom.omega_e0e1_0, atom.alpha_ge0, atom.alpha_e0e1)
            if not all(math.isfinite(v) for v in values):
                raise MachineConfigError(f"atom {j}: non-finite level parameters")
            if not 0 < atom.omega_ge0_0 < atom.omega_e0e1_0:
                raise MachineConfigError(f"atom {j}: need 0 < w_ge0 < w_e0e1 at zero field")
            if not atom.omega_e0e1_0 < l.omega_l:
                raise MachineConfigError(f"atom {j}: zero-field splittings must lie below the laser")
        return self


@dataclass(frozen=True)
class ScheduleSegment:
    duration: float
    stark_voltages: tuple[float, ...]
    laser_on: bool = False
    laser_phase: float = 0.0
    laser_E0: Optional[float] = None
    ramp_steps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stark_voltages", tuple(float(v) for v in self.stark_voltages))
        if not self.duration >= 0:
            raise ValueError(f"segment duration must be non-negative, got {self.duration}")
        if self.ramp_steps < 0:
            raise ValueError("ramp_steps must be non-negative")


@dataclass(frozen=True)
class MeasureDirective:
    atom: int


@dataclass(frozen=True)
class PulseProgram:
    """Time-ordered segments with interleaved measurement directives."""

    n_atoms: int
    items: tuple[Union[ScheduleSegment, MeasureDirective], ...] = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def segments(self) -> list[ScheduleSegment]:
        return [it for it in self.items if isinstance(it, ScheduleSegment)]

    @property
    def measurements(self) -> list[MeasureDirective]:
        return [it for it in self.items if isinstance(it, MeasureDirective)]

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))


def level_splittings(atom: AtomLevels, V: float) -> tuple[float, float]:
    w_ge0 = atom.omega_ge0_0 + atom.alpha_ge0 * V
    w_e0e1 = atom.omega_e0e1_0 + atom.alpha_e0e1 * V
    if w_ge0 <= 0 or w_e0e1 <= 0:
        raise UnphysicalVoltageError(
            f"voltage {V} V gives non-positive splitting (w_ge0={w_ge0:.6g}, w_e0e1={w_e0e1:.6g})"
        )
    return w_ge0, w_e0e1


def stark_voltage_for(atom: AtomLevels, transition: str, target_omega: float) -> float:
    alpha = atom.slope(transition)
    if alpha == 0:
        raise UntunableTransitionError(f"transition {transition} has zero Stark slope")
    return (target_omega - atom.zero_field(transition)) / alpha


def transition_frequency(atom: AtomLevels, transition: str, V: float) -> float:
    w_ge0, w_e0e1 = level_splittings(atom, V)
    return w_ge0 if transition == "ge0" else w_e0e1


def frame_detunings(machine: MachineConfig, voltages: Sequence[float]):
    """Level energies in the laser frame: (d_e0 per atom, d_e1 per atom, d_c)."""
    w_l = machine.laser.omega_l
    d_e0 = np.empty(machine.n)
    d_e1 = np.empty(machine.n)
    for j, (atom, V) in enumerate(zip(machine.atoms, voltages)):
        w_ge0, w_e0e1 = level_splittings(atom, V)
        d_e0[j] = w_ge0 - w_l
        d_e1[j] = (w_ge0 - w_l) + (w_e0e1 - w_l)
    return d_e0, d_e1, machine.cavity.omega_c - w_l


def diagonal_energies(machine: MachineConfig, voltages: Sequence[float]) -> np.ndarray:
    levels, photons = qstate.level_table(machine.n, machine.n_ph)
    d_e0, d_e1, d_c = frame_detunings(machine, voltages)
    energies = d_c * photons.astype(float)
    for j in range(machine.n):
        energies = energies + np.where(levels[:, j] == qstate.E0, d_e0[j], 0.0)
        energies = energies + np.where(levels[:, j] == qstate.E1, d_e1[j], 0.0)
    return energies


@lru_cache(maxsize=256)
def _cavity_generator(n: int, n_ph: int, atom: int, transition: str) -> np.ndarray:
    """i s+ a - i s- a^dag for unit coupling; Hermitian."""
    sp, sm = qstate.TRANSITIONS[transition]
    a = qstate.embed_photon_operator("annihilate", n, n_ph)
    ad = qstate.embed_photon_operator("create", n, n_ph)
    op = 1j * qstate.embed_site_operator(sp, atom, n, n_ph) @ a
    op = op - 1j * qstate.embed_site_operator(sm, atom, n, n_ph) @ ad
    op.setflags(write=False)
    return op


@lru_cache(maxsize=256)
def _site_ladder(n: int, n_ph: int, atom: int, transition: str) -> tuple[np.ndarray, np.ndarray]:
    sp, sm = qstate.TRANSITIONS[transition]
    up = qstate.embed_site_operator(sp, atom, n, n_ph)
    down = qstate.embed_site_operator(sm, atom, n, n_ph)
    up.setflags(write=False)
    down.setflags(write=False)
    return up, down


def cavity_coupling(machine: MachineConfig, atom: int, transition: str) -> np.ndarray:
    return 0.5 * machine.cavity_rabi(transition) * _cavity_generator(
        machine.n, machine.n_ph, atom, transition
    )


def laser_coupling(
    machine: MachineConfig, atom: int, transition: str, phase: float, E0: Optional[float] = None
) -> np.ndarray:
    up, down = _site_ladder(machine.n, machine.n_ph, atom, transition)
    rabi = machine.laser_rabi(atom, transition, E0)
    return 0.5 * rabi * (np.exp(-1j * phase) * up + np.exp(1j * phase) * down)


def assemble_hamiltonian(
    machine: MachineConfig, segment: ScheduleSegment, voltages: Optional[Sequence[float]] = None
) -> np.ndarray:
    """Full physical-mode Hamiltonian for a segment (both transitions driven on every atom)."""
    volts = segment.stark_voltages if voltages is None else tuple(voltages)
    if len(volts) != machine.n:
        raise ValueError(f"segment has {len(volts)} voltages for {machine.n} atoms")
    H = np.diag(diagonal_energies(machine, volts)).astype(complex)
    for j in range(machine.n):
        for tr in TRANSITION_NAMES:
            H += cavity_coupling(machine, j, tr)
            if segment.laser_on:
                H += laser_coupling(machine, j, tr, segment.laser_phase, segment.laser_E0)
    return H


def ramp_steps(
    segment: ScheduleSegment, previous_voltages: Optional[Sequence[float]]
) -> list[tuple[tuple[float, ...], float]]:
    """Piecewise-constant (voltages, dt) steps realizing a segment.

    A ramped segment is split into ``ramp_steps`` equal sub-steps whose
    voltages sample the linear path from ``previous_voltages`` to the
    segment's voltages at sub-step midpoints.
    """
    target = np.asarray(segment.stark_voltages, dtype=float)
    R = segment.ramp_steps
    if R == 0 or previous_voltages is None:
        return [(tuple(target), segment.duration)]
    start = np.asarray(previous_voltages, dtype=float)
    dt = segment.duration / R
    return [(tuple(start + (target - start) * (r + 0.5) / R), dt) for r in range(R)]


@dataclass(frozen=True)
class ResonanceEntry:
    atom: int
    transition: str
    omega: float
    delta_laser: float
    delta_cavity: float
    laser_ratio: float
    cavity_ratio: float
    laser_resonant: bool
    cavity_resonant: bool


@dataclass(frozen=True)
class ResonanceReport:
    entries: tuple[ResonanceEntry, ...]
    laser_on: bool

    @property
    def cavity_resonances(self) -> list[ResonanceEntry]:
        return [e for e in self.entries if e.cavity_resonant]

    @property
    def laser_resonances(self) -> list[ResonanceEntry]:
        return [e for e in self.entries if e.laser_resonant]

    def labels(self) -> list[str]:
        out = [f"cavity:{e.atom}:{e.transition}" for e in self.cavity_resonances]
        out += [f"laser:{e.atom}:{e.transition}" for e in self.laser_resonances]
        return out


def resonance_report(
    machine: MachineConfig,
    segment: ScheduleSegment,
    threshold: float = 1.0,
    voltages: Optional[Sequence[float]] = None,
) -> ResonanceReport:
    """Detunings of every atom/transition from laser and cavity.

    A transition is flagged resonant when ``|delta| < threshold * Omega``;
    laser resonances are only flagged while the laser is on.
    """
    volts = segment.stark_voltages if voltages is None else tuple(voltages)
    entries = []
    for j, (atom, V) in enumerate(zip(machine.atoms, volts)):
        for tr in TRANSITION_NAMES:
            w = transition_frequency(atom, tr, V)
            d_l = w - machine.laser.omega_l
            d_c = w - machine.cavity.omega_c
            om_l = machine.laser_rabi(j, tr, segment.laser_E0)
            om_c = machine.cavity_rabi(tr)
            r_l = abs(d_l) / om_l if om_l > 0 else math.inf
            r_c = abs(d_c) / om_c if om_c > 0 else math.inf
            entries.append(
                ResonanceEntry(
                    atom=j,
                    transition=tr,
                    omega=w,
                    delta_laser=d_l,
                    delta_cavity=d_c,
                    laser_ratio=r_l,
                    cavity_ratio=r_c,
                    laser_resonant=bool(segment.laser_on and r_l < threshold),
                    cavity_resonant=bool(r_c < threshold),
                )
            )
    return ResonanceReport(tuple(entries), segment.laser_on)


# --- configuration files -------------------------------------------------

_ATOM_KEYS = {
    "omega_ge0_0": "omega_ge0_rad_per_s",
    "omega_e0e1_0": "omega_e0e1_rad_per_s",
    "alpha_ge0": "stark_slope_ge0_rad_per_s_per_V",
    "alpha_e0e1": "stark_slope_e0e1_rad_per_s_per_V",
    "mu_ge0": "dipole_ge0_rad_per_s_per_V_per_m",
    "mu_e0e1": "dipole_e0e1_rad_per_s_per_V_per_m",
}
_CAVITY_KEYS = {
    "omega_c": "omega_c_rad_per_s",
    "Omega_c_ge0": "vacuum_rabi_ge0_rad_per_s",
    "Omega_c_e0e1": "vacuum_rabi_e0e1_rad_per_s",
    "n_ph": "photon_cutoff",
}
_LASER_KEYS = {"omega_l": "omega_l_rad_per_s", "E0": "field_amplitude_V_per_m"}


def _take(section: dict, keys: dict, where: str) -> dict:
    try:
        return {attr: section[key] for attr, key in keys.items() if key in section or attr != "n_ph"}
    except KeyError as exc:
        raise MachineConfigError(f"{where}: missing field {exc.args[0]!r}") from None


def machine_from_dict(doc: dict, n_atoms: Optional[int] = None) -> MachineConfig:
    try:
        if "atoms" in doc:
            atoms = [AtomLevels(**_take(a, _ATOM_KEYS, "atom")) for a in doc["atoms"]]
        else:
            template = AtomLevels(**_take(doc["atom"], _ATOM_KEYS, "atom"))
            atoms = [template] * int(doc.get("n_atoms", 1))
        cavity = CavityConfig(**_take(doc["cavity"], _CAVITY_KEYS, "cavity"))
        laser = LaserConfig(**_take(doc["laser"], _LASER_KEYS, "laser"))
        machine = MachineConfig(
            atoms=tuple(atoms),
            cavity=cavity,
            laser=laser,
            t_coh_atom=float(doc.get("coherence_time_atom_s", math.inf)),
            t_coh_cavity=float(doc.get("coherence_time_cavity_s", math.inf)),
            name=str(doc.get("name", "custom")),
        )
    except (KeyError, TypeError) as exc:
        raise MachineConfigError(f"malformed machine document: {exc}") from None
    if n_atoms is not None:
        machine = machine.with_atoms(n_atoms)
    return machine.check_invariants()


def machine_to_dict(machine: MachineConfig) -> dict:
    def section(obj, keys):
        return {key: getattr(obj, attr) for attr, key in keys.items()}

    return {
        "name": machine.name,
        "atoms": [section(a, _ATOM_KEYS) for a in machine.atoms],
        "cavity": section(machine.cavity, _CAVITY_KEYS),
        "laser": section(machine.laser, _LASER_KEYS),
        "coherence_time_atom_s": machine.t_coh_atom,
        "coherence_time_cavity_s": machine.t_coh_cavity,
    }


def load_preset(name: str, n_atoms: Optional[int] = None) -> MachineConfig:
    if name not in PRESETS:
        raise MachineConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("cavityqc.presets").joinpath(f"{name}.json").read_text("utf-8")
    return machine_from_dict(json.loads(text), n_atoms)


def load_machine(spec: Union[str, Path], n_atoms: Optional[int] = None) -> MachineConfig:
    """Load a bundled preset by name or a machine JSON file by path."""
    if isinstance(spec, str) and spec in PRESETS:
        return load_preset(spec, n_atoms)
    path = Path(spec)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise MachineConfigError(f"machine file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MachineConfigError(f"machine file {path} is not valid JSON: {exc}") from None
    return machine_from_dict(doc, n_atoms)
