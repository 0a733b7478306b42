"""Static hardware imperfections and the inter-gate propagator.

The register Hamiltonian between gates is

    H' = sum_i delta_i Z_i + sum_i J_i X_i X_{i+1}

on an open chain. The uniform qubit splitting is assumed refocused and is
not part of the dynamics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ContractViolation, DomainError, StateVector
from .gates import bit_of

STATIC = "static"
SINGLE = "single"

DEFAULT_SPLIT_TOL = 1e-10


@dataclass(frozen=True)
class ImperfectionSpec:
    """Imperfection model and its strength.

    ``model="static"`` draws ``delta_i`` uniformly in ``[-delta/2, delta/2]``
    and ``J_i`` uniformly in ``[-j_coupling, j_coupling]``; its propagator
    acts after every gate. ``model="single"`` puts a fixed detuning
    ``delta`` on one qubit (``qubit=None`` picks it at random per
    realization) and acts once per kick, right after the first QFT.
    """

    model: str = STATIC
    delta: float = 0.0
    tau_g: float = 1.0
    j_coupling: float = 0.0
    qubit: int | None = None
    delta0: float = 0.0  # documented only; refocused away

    def __post_init__(self):
        if self.model not in (STATIC, SINGLE):
            raise DomainError(f"unknown imperfection model {self.model!r}")
        if self.delta < 0:
            raise DomainError("delta must be >= 0")
        if self.tau_g <= 0:
            raise DomainError("tau_g must be > 0")
        if self.j_coupling < 0:
            raise DomainError("j_coupling must be >= 0")
        if self.model == SINGLE and self.j_coupling != 0:
            raise DomainError("the single-impurity model has no couplings")

    @property
    def epsilon(self) -> float:
        return self.delta * self.tau_g

    @classmethod
    def from_epsilon(cls, epsilon: float, model: str = STATIC, j_ratio: float = 0.0, tau_g: float = 1.0, qubit: int | None = None):
        """Spec with ``delta = epsilon / tau_g`` and ``J = j_ratio * delta``."""
        if epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        delta = epsilon / tau_g
        return cls(model=model, delta=delta, tau_g=tau_g, j_coupling=j_ratio * delta, qubit=qubit)

    def with_epsilon(self, epsilon: float) -> ImperfectionSpec:
        ratio = self.j_coupling / self.delta if self.delta > 0 else 0.0
        return ImperfectionSpec.from_epsilon(epsilon, self.model, ratio, self.tau_g, self.qubit)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "delta": self.delta,
            "tau_g": self.tau_g,
            "j_coupling": self.j_coupling,
            "qubit": self.qubit,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class DisorderRealization:
    deltas: np.ndarray
    couplings: np.ndarray
    seed: int | None = None
    model: str = STATIC

    def __post_init__(self):
        object.__setattr__(self, "deltas", np.asarray(self.deltas, dtype=float))
        object.__setattr__(self, "couplings", np.asarray(self.couplings, dtype=float))
        if self.couplings.shape != (max(self.n_q - 1, 0),):
            raise ContractViolation("need exactly n_q - 1 nearest-neighbour couplings")

    @property
    def n_q(self) -> int:
        return self.deltas.shape[0]

    @property
    def is_zero(self) -> bool:
        return not self.deltas.any() and not self.couplings.any()

    def scaled(self, factor: float) -> DisorderRealization:
        return DisorderRealization(self.deltas * factor, self.couplings * factor, self.seed, self.model)

    def to_dict(self) -> dict:
        return {"deltas": self.deltas.tolist(), "couplings": self.couplings.tolist(), "seed": self.seed, "model": self.model}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, rec: dict) -> DisorderRealization:
        return cls(np.array(rec["deltas"], dtype=float), np.array(rec["couplings"], dtype=float), rec.get("seed"), rec.get("model", STATIC))


def zero_realization(n_q: int, model: str = STATIC) -> DisorderRealization:
    return DisorderRealization(np.zeros(n_q), np.zeros(n_q - 1), None, model)


def sample_realization(spec: ImperfectionSpec, n_q: int, seed: int) -> DisorderRealization:
    """Draw one frozen set of detunings and couplings, deterministic in ``seed``."""
    if n_q < 2:
        raise DomainError("need at least two qubits")
    rng = np.random.default_rng(seed)
    if spec.model == SINGLE:
        qubit = spec.qubit if spec.qubit is not None else int(rng.integers(n_q))
        if not 0 <= qubit < n_q:
            raise DomainError(f"impurity qubit {qubit} outside [0, {n_q})")
        deltas = np.zeros(n_q)
        deltas[qubit] = spec.delta
        return DisorderRealization(deltas, np.zeros(n_q - 1), seed, SINGLE)
    half = spec.delta / 2.0
    deltas = rng.uniform(-half, half, n_q) if half > 0 else np.zeros(n_q)
    couplings = rng.uniform(-spec.j_coupling, spec.j_coupling, n_q - 1) if spec.j_coupling > 0 else np.zeros(n_q - 1)
    return DisorderRealization(deltas, couplings, seed, STATIC)


def z_phase_angles(deltas: np.ndarray, tau_g: float) -> np.ndarray:
    """Angles of ``exp(-i tau_g sum_i delta_i s_i)``, ``s_i = 1 - 2 b_i``."""
    n_q = len(deltas)
    dim = 1 << n_q
    ang = np.zeros(dim)
    for q, d in enumerate(deltas):
        if d != 0.0:
            ang -= tau_g * d * (1 - 2 * bit_of(dim, q))
    return ang


def xx_rotation_(arr: np.ndarray, bond: int, theta: float) -> np.ndarray:
    """In place ``exp(-i theta X_b X_{b+1})``."""
    dim = arr.shape[0]
    view = arr.reshape(dim >> (bond + 2), 2, 2, 1 << bond, -1)
    flipped = view[:, ::-1, ::-1].copy()
    view *= math.cos(theta)
    view -= 1j * math.sin(theta) * flipped
    return arr


def strang_substeps(real: DisorderRealization, tau_g: float, tol: float = DEFAULT_SPLIT_TOL) -> int:
    """Number of symmetric-split substeps keeping the leading error below ``tol``.

    Uses nested-commutator norm bounds of the two halves of ``H'``.
    """
    d, jj = np.abs(real.deltas), np.abs(real.couplings)
    if not jj.any() or not d.any():
        return 1
    dz = d[:-1] + d[1:]
    jn = jj.copy()
    jn[1:] += jj[:-1]
    jn[:-1] += jj[1:]
    aab = np.sum(4 * jj * dz**2)
    bba = np.sum(4 * jj * dz * jn)
    est = tau_g**3 * (bba / 12 + aab / 24)
    return max(1, math.ceil(math.sqrt(est / tol)))


@dataclass
class Propagator:
    """Compiled ``exp(-i tau_g H')`` as a list of primitive in-place operations.

    Each primitive is ``("D", angles)`` (diagonal phase) or
    ``("XX", bond, theta)``. Diagonal runs are merged by the kick compiler.
    """

    ops: list = field(default_factory=list)

    @property
    def diagonal(self) -> bool:
        return all(op[0] == "D" for op in self.ops)

    def apply_(self, arr: np.ndarray) -> np.ndarray:
        for op in self.ops:
            if op[0] == "D":
                _diag_(arr, op[1])
            else:
                xx_rotation_(arr, op[1], op[2])
        return arr


def _diag_(arr: np.ndarray, angles: np.ndarray) -> None:
    ph = np.exp(1j * angles)
    if arr.ndim == 1:
        arr *= ph
    else:
        arr *= ph.reshape((-1,) + (1,) * (arr.ndim - 1))


def static_propagator(real: DisorderRealization, tau_g: float, tol: float = DEFAULT_SPLIT_TOL) -> Propagator:
    """Inter-gate propagator for the chain model.

    Exact diagonal phase when all couplings vanish; otherwise ``m`` symmetric
    substeps of half z-phase, all bond rotations (mutually commuting), half
    z-phase.
    """
    if not real.couplings.any():
        if not real.deltas.any():
            return Propagator([])
        return Propagator([("D", z_phase_angles(real.deltas, tau_g))])
    m = strang_substeps(real, tau_g, tol)
    h = tau_g / m
    half = z_phase_angles(real.deltas, h / 2.0)
    bonds = [b for b in range(real.n_q - 1) if real.couplings[b] != 0.0]
    even = [("XX", b, h * real.couplings[b]) for b in bonds if b % 2 == 0]
    odd = [("XX", b, h * real.couplings[b]) for b in bonds if b % 2 == 1]
    ops = []
    for _ in range(m):
        ops += [("D", half), *even, *odd, ("D", half)]
    return Propagator(ops)


def impurity_propagator(real: DisorderRealization, tau_g: float) -> Propagator:
    """``exp(-i delta tau_g Z_q)`` on the impurity qubit."""
    if not real.deltas.any():
        return Propagator([])
    return Propagator([("D", z_phase_angles(real.deltas, tau_g))])


def apply_static_propagator(state: StateVector, real: DisorderRealization, tau_g: float, tol: float = DEFAULT_SPLIT_TOL) -> StateVector:
    """Apply ``exp(-i tau_g H')`` to a state in whatever basis it is stored."""
    if real.n_q != state.n_q:
        raise ContractViolation(f"realization has {real.n_q} qubits, state has {state.n_q}")
    out = state.copy()
    static_propagator(real, tau_g, tol).apply_(out.amps)
    return out


def hamiltonian_matrix(real: DisorderRealization) -> np.ndarray:
    """Dense ``H'`` (tests and small-size oracles only)."""
    n_q = real.n_q
    dim = 1 << n_q
    h = np.diag(np.sum([d * (1 - 2 * bit_of(dim, q)) for q, d in enumerate(real.deltas)], axis=0).astype(complex))
    idx = np.arange(dim)
    for b, jb in enumerate(real.couplings):
        if jb != 0.0:
            h[idx ^ (3 << b), idx] += jb
    return h
