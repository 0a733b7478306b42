"""Register conventions, statevectors and seeding shared by every module.

Storage conventions used throughout the package:

* A register of ``n_q`` qubits holds ``N = 2**n_q`` complex amplitudes.
* Storage index ``j`` is little-endian over qubits: qubit 0 is the least
  significant bit of ``j``.
* In the momentum basis ``j = n + N/2`` with ``-N/2 <= n < N/2``.
* In the angle basis ``j = l`` with ``theta_l = 2*pi*l/N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MOMENTUM = "momentum"
ANGLE = "angle"
_BASES = (MOMENTUM, ANGLE)

DEFAULT_K = math.sqrt(2.0)


class ContractViolation(ValueError):
    """Arguments are structurally incompatible (shape, basis, dimension)."""


class DomainError(ValueError):
    """A scalar argument lies outside its allowed range."""


class ResourceError(RuntimeError):
    """The requested problem size exceeds the configured limit."""


class DiagnosticsError(RuntimeError):
    """A numerical certificate (residual, orthonormality) was not met."""

    def __init__(self, message: str, worst: float | None = None):
        super().__init__(message)
        self.worst = worst


class NotFoundError(LookupError):
    """A searched-for quantity (e.g. a threshold bracket) does not exist."""


@dataclass(frozen=True)
class MapParams:
    """Sawtooth-map parameters on the torus for a register of ``n_q`` qubits.

    ``t_kick = 2*pi/N`` and ``k_strength = cap_k / t_kick`` are derived.
    """

    n_q: int
    cap_k: float = DEFAULT_K

    def __post_init__(self):
        if int(self.n_q) != self.n_q or self.n_q < 1:
            raise DomainError(f"n_q must be a positive integer, got {self.n_q!r}")

    @property
    def big_n(self) -> int:
        return 1 << self.n_q

    @property
    def t_kick(self) -> float:
        return 2.0 * math.pi / self.big_n

    @property
    def k_strength(self) -> float:
        return self.cap_k / self.t_kick

    def momenta(self) -> np.ndarray:
        """Momentum quantum number of every storage index (momentum basis)."""
        return np.arange(self.big_n) - self.big_n // 2

    def angles(self) -> np.ndarray:
        """Angle of every storage index (angle basis)."""
        return 2.0 * math.pi * np.arange(self.big_n) / self.big_n

    def index_of_momentum(self, n: int) -> int:
        half = self.big_n // 2
        if not -half <= n < half:
            raise DomainError(f"momentum {n} outside [-{half}, {half})")
        return int(n) + half

    def momentum_of_index(self, j: int) -> int:
        if not 0 <= j < self.big_n:
            raise DomainError(f"index {j} outside [0, {self.big_n})")
        return int(j) - self.big_n // 2


@dataclass
class StateVector:
    """Amplitudes of the register plus the representation they are written in."""

    amps: np.ndarray
    basis: str = MOMENTUM

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.ndim != 1:
            raise ContractViolation("StateVector amplitudes must be one-dimensional")
        dim = self.amps.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise ContractViolation(f"dimension {dim} is not a power of two >= 2")
        if self.basis not in _BASES:
            raise ContractViolation(f"unknown basis tag {self.basis!r}")

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    @property
    def n_q(self) -> int:
        return self.dim.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> StateVector:
        return StateVector(self.amps.copy(), self.basis)

    def normalized(self) -> StateVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise DomainError("cannot normalize the zero vector")
        return StateVector(self.amps / nrm, self.basis)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """Return ``<a|b> = sum_j conj(a_j) b_j``."""
    if a.dim != b.dim:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.basis != b.basis:
        raise ContractViolation(f"basis mismatch: {a.basis} vs {b.basis}")
    return complex(np.vdot(a.amps, b.amps))


def basis_state(params: MapParams, n: int) -> StateVector:
    """Momentum eigenstate ``|n>`` stored at index ``n + N/2``."""
    j = params.index_of_momentum(n)
    amps = np.zeros(params.big_n, dtype=np.complex128)
    amps[j] = 1.0
    return StateVector(amps, MOMENTUM)


def random_state(params: MapParams, rng: np.random.Generator, basis: str = MOMENTUM) -> StateVector:
    amps = rng.normal(size=params.big_n) + 1j * rng.normal(size=params.big_n)
    return StateVector(amps / np.linalg.norm(amps), basis)


@dataclass(frozen=True)
class SeedPlan:
    """Counter-based seed derivation.

    Every task seed is a hash of the master seed and the task's indices, so
    results do not depend on the order in which tasks are scheduled.
    """

    master_seed: int = 12345
    extra: tuple[int, ...] = field(default=())

    def task_seed(self, n_q: int, eps_index: int, realization: int) -> int:
        entropy = [int(self.master_seed) & 0xFFFFFFFFFFFFFFFF, int(n_q), int(eps_index), int(realization), *self.extra]
        seq = np.random.SeedSequence(entropy)
        return int(seq.generate_state(1, dtype=np.uint64)[0])

    def rng(self, n_q: int, eps_index: int, realization: int) -> np.random.Generator:
        return np.random.default_rng(self.task_seed(n_q, eps_index, realization))
