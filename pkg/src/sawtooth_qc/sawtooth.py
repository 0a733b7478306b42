"""Sawtooth map: classical step, exact quantum kick, gate-level kick."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MOMENTUM, ContractViolation, MapParams, StateVector
from .gates import LAYOUT_PAPER, GateSchedule, bit_reversal_permutation, build_schedule, hadamard_
from .imperfect import SINGLE, DisorderRealization, ImperfectionSpec, impurity_propagator, static_propagator, xx_rotation_

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ClassicalPoint:
    n: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


def wrap_momentum(p):
    """Reduce rescaled momentum into ``[-pi, pi)``."""
    return (np.asarray(p) + math.pi) % TWO_PI - math.pi


def classical_step(pt: ClassicalPoint, params: MapParams, torus: bool = True) -> ClassicalPoint:
    n_bar = pt.n + params.k_strength * (pt.theta - math.pi)
    if torus:
        n_bar = float(wrap_momentum(params.t_kick * n_bar)) / params.t_kick
    theta_bar = (pt.theta + params.t_kick * n_bar) % TWO_PI
    return ClassicalPoint(n_bar, theta_bar)


def classical_orbit(n0, theta0, params: MapParams, steps: int, torus: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized orbit of an ensemble; returns arrays of shape ``(steps + 1, *n0.shape)``."""
    n = np.array(n0, dtype=float)
    th = np.array(theta0, dtype=float) % TWO_PI
    ns, ths = [n.copy()], [th.copy()]
    k, t = params.k_strength, params.t_kick
    for _ in range(steps):
        n = n + k * (th - math.pi)
        if torus:
            n = wrap_momentum(t * n) / t
        th = (th + t * n) % TWO_PI
        ns.append(n.copy())
        ths.append(th.copy())
    return np.array(ns), np.array(ths)


def kick_phases(params: MapParams) -> np.ndarray:
    """``k (theta_l - pi)**2 / 2`` on the angle grid."""
    return 0.5 * params.k_strength * (params.angles() - math.pi) ** 2


def kinetic_phases(params: MapParams) -> np.ndarray:
    """``-T n**2 / 2`` on the momentum grid."""
    return -0.5 * params.t_kick * params.momenta().astype(float) ** 2


def _bcast(v: np.ndarray, arr: np.ndarray) -> np.ndarray:
    return v.reshape((-1,) + (1,) * (arr.ndim - 1))


def ideal_kick_array(amps: np.ndarray, params: MapParams) -> np.ndarray:
    """Split-operator kick on raw momentum amplitudes (axis 0), via FFT."""
    big_n = params.big_n
    root = math.sqrt(big_n)
    ang = np.fft.ifft(amps, axis=0) * root
    ang *= _bcast(np.exp(1j * kick_phases(params)), ang)
    out = np.fft.fft(ang, axis=0) / root
    out *= _bcast(np.exp(1j * kinetic_phases(params)), out)
    return out


def ideal_kick(state: StateVector, params: MapParams) -> StateVector:
    """``exp(-i T n^2 / 2) exp(i k (theta - pi)^2 / 2) psi`` computed with exact DFTs."""
    if state.basis != MOMENTUM:
        raise ContractViolation("ideal_kick expects a momentum-basis state")
    if state.dim != params.big_n:
        raise ContractViolation("state dimension does not match params")
    return StateVector(ideal_kick_array(state.amps, params), MOMENTUM)


class KickProgram:
    """One gate-level kick compiled to a short list of array operations.

    Runs of diagonal gates and diagonal propagator factors commute, so each
    run is folded into one phase vector. Hadamards, bond rotations and the
    bit-reversal relabeling are kept as separate steps.
    """

    def __init__(self, params: MapParams, spec: ImperfectionSpec | None = None, real: DisorderRealization | None = None, layout: str = LAYOUT_PAPER):
        if (spec is None) != (real is None):
            raise ContractViolation("imperfection spec and realization must be given together")
        if real is not None and real.n_q != params.n_q:
            raise ContractViolation(f"realization has {real.n_q} qubits, params have {params.n_q}")
        self.params = params
        self.spec = spec
        self.real = real
        self.schedule: GateSchedule = build_schedule(params, layout)
        self.ops = self._compile()

    def _compile(self) -> list:
        sch = self.schedule
        dim = self.params.big_n
        after = marker_prop = None
        if self.spec is not None and not self.real.is_zero:
            if self.spec.model == SINGLE or self.real.model == SINGLE:
                marker_prop = impurity_propagator(self.real, self.spec.tau_g)
            else:
                after = static_propagator(self.real, self.spec.tau_g)

        ops: list = []
        acc = np.zeros(dim)
        dirty = False
        perm = bit_reversal_permutation(sch.n_q)

        def flush():
            nonlocal acc, dirty
            if dirty:
                ops.append(("D", np.exp(1j * acc)))
                acc = np.zeros(dim)
                dirty = False

        def absorb(prop):
            nonlocal acc, dirty
            for op in prop.ops:
                if op[0] == "D":
                    acc += op[1]
                    dirty = True
                else:
                    flush()
                    ops.append(op)

        n_ev = len(sch.events)
        for pos in range(n_ev + 1):
            if pos in sch.relabel_before:
                flush()
                ops.append(("PERM", perm))
            if pos == sch.marker and marker_prop is not None:
                absorb(marker_prop)
            if pos == n_ev:
                break
            ev = sch.events[pos]
            if ev.diagonal:
                acc += ev.phase_vector(dim)
                dirty = True
            else:
                flush()
                ops.append(("H", ev.targets[0]))
            if after is not None:
                absorb(after)
        acc += sch.global_phase
        dirty = True
        flush()
        return ops

    def apply_(self, arr: np.ndarray) -> np.ndarray:
        """Advance the amplitudes in ``arr`` (axis 0, C-contiguous) by one kick, in place."""
        for op in self.ops:
            tag = op[0]
            if tag == "H":
                hadamard_(arr, op[1])
            elif tag == "D":
                arr *= _bcast(op[1], arr)
            elif tag == "PERM":
                arr[...] = arr[op[1]]
            else:
                xx_rotation_(arr, op[1], op[2])
        return arr

    def __call__(self, state: StateVector) -> StateVector:
        if state.basis != MOMENTUM:
            raise ContractViolation("circuit kick expects a momentum-basis state")
        if state.dim != self.params.big_n:
            raise ContractViolation("state dimension does not match params")
        out = state.amps.copy()
        self.apply_(out)
        return StateVector(out, MOMENTUM)


def circuit_kick(state: StateVector, params: MapParams, spec: ImperfectionSpec | None = None, real: DisorderRealization | None = None, layout: str = LAYOUT_PAPER) -> StateVector:
    """One map iteration executed gate by gate with inter-gate imperfection propagators."""
    return KickProgram(params, spec, real, layout)(state)
