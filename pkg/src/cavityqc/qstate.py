"""
Composite Hilbert space of ``n`` three-level atoms and one truncated cavity mode.

Basis ordering: atom trits are most significant (atom 0 highest), the photon
number is least significant::

    index = (sum_j level_j * 3**(n-1-j)) * (n_ph + 1) + photon

Operators are plain dense ``numpy`` arrays of dtype ``complex128``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractViolation, InvalidLabelError

G, E0, E1 = 0, 1, 2
LEVEL_NAMES = ("g", "e0", "e1")

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class BasisLabel:
    atom_levels: tuple[int, ...]
    photon: int = 0

    def __str__(self):
        atoms = ",".join(LEVEL_NAMES[t] for t in self.atom_levels)
        return f"|{atoms};{self.photon}>"


def dimension(n: int, n_ph: int) -> int:
    return 3**n * (n_ph + 1)


def basis_index(label: BasisLabel, n: int, n_ph: int) -> int:
    levels = tuple(label.atom_levels)
    if len(levels) != n:
        raise InvalidLabelError(f"expected {n} atom levels, got {len(levels)}")
    if not 0 <= label.photon <= n_ph:
        raise InvalidLabelError(f"photon number {label.photon} outside [0, {n_ph}]")
    atom_index = 0
    for trit in levels:
        if trit not in (G, E0, E1):
            raise InvalidLabelError(f"invalid atomic level {trit!r}")
        atom_index = 3 * atom_index + trit
    return atom_index * (n_ph + 1) + label.photon


def basis_label(index: int, n: int, n_ph: int) -> BasisLabel:
    if not 0 <= index < dimension(n, n_ph):
        raise InvalidLabelError(f"index {index} outside [0, {dimension(n, n_ph)})")
    atom_index, photon = divmod(index, n_ph + 1)
    levels = []
    for _ in range(n):
        atom_index, trit = divmod(atom_index, 3)
        levels.append(trit)
    return BasisLabel(tuple(reversed(levels)), photon)


@lru_cache(maxsize=64)
def level_table(n: int, n_ph: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-basis-state atomic levels, shape (dim, n), and photon numbers, shape (dim,)."""
    dim = dimension(n, n_ph)
    idx = np.arange(dim)
    photons = idx % (n_ph + 1)
    atom_index = idx // (n_ph + 1)
    levels = np.empty((dim, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        levels[:, j] = atom_index % 3
        atom_index = atom_index // 3
    levels.setflags(write=False)
    photons.setflags(write=False)
    return levels, photons


@lru_cache(maxsize=64)
def qubit_subspace_indices(n: int, n_ph: int) -> np.ndarray:
    """Full-space indices of the 2**n qubit states (levels g/e0, photon 0), bit order = atom order."""
    out = np.empty(2**n, dtype=np.int64)
    for q in range(2**n):
        bits = tuple((q >> (n - 1 - j)) & 1 for j in range(n))
        out[q] = basis_index(BasisLabel(bits, 0), n, n_ph)
    out.setflags(write=False)
    return out


def ket(i: int, j: int) -> np.ndarray:
    """3x3 matrix |i><j| on a single atom."""
    m = np.zeros((3, 3), dtype=complex)
    m[i, j] = 1.0
    return m


SIGMA_PLUS_GE0 = ket(E0, G)
SIGMA_MINUS_GE0 = ket(G, E0)
SIGMA_PLUS_E0E1 = ket(E1, E0)
SIGMA_MINUS_E0E1 = ket(E0, E1)
PROJ_G = ket(G, G)
PROJ_E0 = ket(E0, E0)
PROJ_E1 = ket(E1, E1)

TRANSITIONS = {
    "ge0": (SIGMA_PLUS_GE0, SIGMA_MINUS_GE0),
    "e0e1": (SIGMA_PLUS_E0E1, SIGMA_MINUS_E0E1),
}


def embed_site_operator(op3, atom: int, n: int, n_ph: int) -> np.ndarray:
    op3 = np.asarray(op3, dtype=complex)
    if op3.shape != (3, 3):
        raise ContractViolation(f"site operator must be 3x3, got {op3.shape}")
    if not 0 <= atom < n:
        raise InvalidLabelError(f"atom {atom} outside [0, {n})")
    left = np.eye(3**atom, dtype=complex)
    right = np.eye(3 ** (n - 1 - atom) * (n_ph + 1), dtype=complex)
    return np.kron(np.kron(left, op3), right)


def photon_ladder(kind: str, n_ph: int) -> np.ndarray:
    if n_ph < 1:
        raise ContractViolation("photon cutoff must be at least 1")
    a = np.diag(np.sqrt(np.arange(1, n_ph + 1, dtype=float)), k=1).astype(complex)
    if kind == "annihilate":
        return a
    if kind == "create":
        return a.conj().T
    if kind == "number":
        return np.diag(np.arange(n_ph + 1, dtype=float)).astype(complex)
    raise ValueError(f"unknown photon operator kind {kind!r}")


def embed_photon_operator(kind: str, n: int, n_ph: int) -> np.ndarray:
    return np.kron(np.eye(3**n, dtype=complex), photon_ladder(kind, n_ph))


def excitation_number_operator(n: int, n_ph: int) -> np.ndarray:
    """N_exc = sum_j (level index of atom j) + photon number; diagonal."""
    levels, photons = level_table(n, n_ph)
    return np.diag((levels.sum(axis=1) + photons).astype(complex))


def is_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    return bool(np.max(np.abs(H - H.conj().T), initial=0.0) <= tol * scale)


def matrix_exponential_hermitian(H, t: float) -> np.ndarray:
    """Return exp(-i H t) for Hermitian ``H`` via its eigendecomposition."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {H.shape}")
    if not is_hermitian(H):
        raise ContractViolation("matrix_exponential_hermitian requires a Hermitian matrix")
    evals, evecs = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes over (3 levels)^n (x) photon 0..n_ph. Immutable."""

    amplitudes: np.ndarray
    n: int
    n_ph: int = 1

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != dimension(self.n, self.n_ph):
            raise ContractViolation(
                f"state has {amps.shape[0]} amplitudes, expected {dimension(self.n, self.n_ph)}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ContractViolation(f"state norm {norm!r} differs from 1 by more than {NORM_TOL}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def ground(cls, n: int, n_ph: int = 1) -> "StateVector":
        return cls.basis(BasisLabel((G,) * n, 0), n, n_ph)

    @classmethod
    def basis(cls, label: BasisLabel, n: int, n_ph: int = 1) -> "StateVector":
        amps = np.zeros(dimension(n, n_ph), dtype=complex)
        amps[basis_index(label, n, n_ph)] = 1.0
        return cls(amps, n, n_ph)

    @classmethod
    def from_qubit_amplitudes(cls, qubit_amps, n: int, n_ph: int = 1) -> "StateVector":
        """Embed a 2**n qubit state (g=0, e0=1) with the cavity in vacuum."""
        qubit_amps = np.asarray(qubit_amps, dtype=complex).reshape(-1)
        if qubit_amps.shape[0] != 2**n:
            raise ContractViolation(f"expected {2**n} qubit amplitudes")
        amps = np.zeros(dimension(n, n_ph), dtype=complex)
        amps[qubit_subspace_indices(n, n_ph)] = qubit_amps
        return cls(amps, n, n_ph)

    def evolve(self, U: np.ndarray) -> "StateVector":
        return StateVector(U @ self.amplitudes, self.n, self.n_ph)

    def amplitude(self, label: BasisLabel) -> complex:
        return complex(self.amplitudes[basis_index(label, self.n, self.n_ph)])

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def qubit_amplitudes(self) -> np.ndarray:
        return self.amplitudes[qubit_subspace_indices(self.n, self.n_ph)].copy()

    def photon_number_expectation(self) -> float:
        _, photons = level_table(self.n, self.n_ph)
        return float(np.sum(self.probabilities() * photons))

    def excitation_expectation(self) -> float:
        levels, photons = level_table(self.n, self.n_ph)
        return float(np.sum(self.probabilities() * (levels.sum(axis=1) + photons)))

    def level_population(self, atom: int, level: int) -> float:
        levels, _ = level_table(self.n, self.n_ph)
        return float(np.sum(self.probabilities()[levels[:, atom] == level]))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2
