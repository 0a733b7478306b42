"""Gate kernels, the quantum Fourier transform and the one-kick gate schedule.

Kernels act in place on an amplitude buffer whose axis 0 has length ``N``;
extra trailing axes are treated as a batch of independent states (this is
how whole Floquet matrices are built column-by-column in one pass).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import ANGLE, MOMENTUM, ContractViolation, DomainError, MapParams, StateVector

HADAMARD = "H"
PHASE = "P"
CPHASE = "CP"
_KINDS = (HADAMARD, PHASE, CPHASE)

_SQRT_HALF = 1.0 / math.sqrt(2.0)

LAYOUT_PAPER = "paper"
LAYOUT_COMPACT = "compact"


def _check_qubit(n_q: int, q: int) -> None:
    if not 0 <= q < n_q:
        raise DomainError(f"qubit index {q} outside [0, {n_q})")


def _n_q_of(arr: np.ndarray) -> int:
    dim = arr.shape[0]
    if dim < 2 or dim & (dim - 1):
        raise ContractViolation(f"dimension {dim} is not a power of two")
    return dim.bit_length() - 1


def bit_of(dim: int, q: int) -> np.ndarray:
    """0/1 value of bit ``q`` for every index ``0..dim-1``."""
    return (np.arange(dim) >> q) & 1


def _wrap(phi: float) -> float:
    # (-pi, pi]; keeps large quadratic-form coefficients well conditioned
    return float(math.pi - math.fmod(math.pi - phi, 2.0 * math.pi)) if phi != 0.0 else 0.0


# -- in-place array kernels ---------------------------------------------------


def hadamard_(arr: np.ndarray, q: int) -> np.ndarray:
    dim = arr.shape[0]
    view = arr.reshape(dim >> (q + 1), 2, 1 << q, -1)
    a = view[:, 0].copy()
    b = view[:, 1]
    view[:, 0] = (a + b) * _SQRT_HALF
    view[:, 1] = (a - b) * _SQRT_HALF
    return arr


def phase_(arr: np.ndarray, q: int, phi: float) -> np.ndarray:
    dim = arr.shape[0]
    view = arr.reshape(dim >> (q + 1), 2, 1 << q, -1)
    view[:, 1] *= np.exp(1j * phi)
    return arr


def cphase_(arr: np.ndarray, q1: int, q2: int, phi: float) -> np.ndarray:
    lo, hi = min(q1, q2), max(q1, q2)
    dim = arr.shape[0]
    view = arr.reshape(dim >> (hi + 1), 2, 1 << (hi - lo - 1), 2, 1 << lo, -1)
    view[:, 1, :, 1] *= np.exp(1j * phi)
    return arr


def bit_reversal_permutation(n_q: int) -> np.ndarray:
    idx = np.arange(1 << n_q)
    rev = np.zeros_like(idx)
    for q in range(n_q):
        rev |= ((idx >> q) & 1) << (n_q - 1 - q)
    return rev


# -- public StateVector operations ---------------------------------------------


def apply_hadamard(state: StateVector, q: int) -> StateVector:
    _check_qubit(state.n_q, q)
    out = state.copy()
    hadamard_(out.amps, q)
    return out


def apply_phase(state: StateVector, q: int, phi: float) -> StateVector:
    """Multiply by ``exp(i phi)`` every amplitude whose bit ``q`` is set."""
    _check_qubit(state.n_q, q)
    out = state.copy()
    phase_(out.amps, q, phi)
    return out


def apply_controlled_phase(state: StateVector, q1: int, q2: int, phi: float) -> StateVector:
    """Multiply by ``exp(i phi)`` every amplitude with bits ``q1`` and ``q2`` both set."""
    _check_qubit(state.n_q, q1)
    _check_qubit(state.n_q, q2)
    if q1 == q2:
        raise DomainError("controlled phase needs two distinct qubits")
    out = state.copy()
    cphase_(out.amps, q1, q2, phi)
    return out


def qft_events(n_q: int, inverse: bool = False) -> list[GateEvent]:
    """Gate list of the textbook QFT without the final swap network.

    Followed by a bit-reversal relabeling, the non-inverse list maps index
    ``x`` to ``sum_y exp(+2 pi i x y / N) |y> / sqrt(N)``. The inverse list
    must be preceded by the relabeling.
    """
    events = []
    for q in range(n_q - 1, -1, -1):
        events.append(GateEvent(HADAMARD, (q,)))
        for m in range(q - 1, -1, -1):
            events.append(GateEvent(CPHASE, (m, q), math.pi / (1 << (q - m))))
    if inverse:
        events = [ev.inverse() for ev in reversed(events)]
    return events


def qft(state: StateVector, direction: str) -> StateVector:
    """Gate-level quantum Fourier transform between the angle and momentum bases.

    ``backward`` takes momentum amplitudes to angle amplitudes with kernel
    ``exp(+2 pi i j l / N) / sqrt(N)``; ``forward`` is its inverse. The
    bit reversal is an index relabeling, not a gate.
    """
    n_q = state.n_q
    perm = bit_reversal_permutation(n_q)
    arr = state.amps.copy()
    if direction == "backward":
        if state.basis != MOMENTUM:
            raise ContractViolation("backward QFT expects a momentum-basis state")
        for ev in qft_events(n_q):
            ev.apply_(arr)
        return StateVector(arr[perm], ANGLE)
    if direction == "forward":
        if state.basis != ANGLE:
            raise ContractViolation("forward QFT expects an angle-basis state")
        arr = arr[perm]
        for ev in qft_events(n_q, inverse=True):
            ev.apply_(arr)
        return StateVector(arr, MOMENTUM)
    raise DomainError(f"unknown QFT direction {direction!r}")


# -- schedule -----------------------------------------------------------------------


@dataclass(frozen=True)
class GateEvent:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind == CPHASE else 1
        if len(self.targets) != want or len(set(self.targets)) != want:
            raise DomainError(f"{self.kind} needs {want} distinct targets, got {self.targets}")
        if (self.angle is None) != (self.kind == HADAMARD):
            raise DomainError(f"{self.kind} angle must be {'absent' if self.kind == HADAMARD else 'given'}")

    @property
    def diagonal(self) -> bool:
        return self.kind != HADAMARD

    def inverse(self) -> GateEvent:
        if self.kind == HADAMARD:
            return self
        return GateEvent(self.kind, self.targets, -self.angle)

    def apply_(self, arr: np.ndarray) -> np.ndarray:
        if self.kind == HADAMARD:
            return hadamard_(arr, self.targets[0])
        if self.kind == PHASE:
            return phase_(arr, self.targets[0], self.angle)
        return cphase_(arr, self.targets[0], self.targets[1], self.angle)

    def phase_vector(self, dim: int) -> np.ndarray:
        """Angles (radians) this diagonal gate adds to each index."""
        mask = bit_of(dim, self.targets[0])
        if self.kind == CPHASE:
            mask = mask & bit_of(dim, self.targets[1])
        return self.angle * mask

    def to_json(self) -> str:
        rec = {"kind": self.kind, "t": list(self.targets)}
        if self.angle is not None:
            rec["phi"] = self.angle
        return json.dumps(rec)


@dataclass
class GateSchedule:
    """Ordered gates of one map iteration plus bookkeeping.

    ``relabel_before`` holds event positions preceded by a bit-reversal
    relabeling (position ``len(events)`` means "after the last event").
    ``marker`` is the event position right after the first QFT, where the
    single-impurity propagator acts.
    """

    n_q: int
    events: list[GateEvent]
    relabel_before: tuple[int, ...]
    marker: int
    global_phase: float
    layout: str = LAYOUT_PAPER
    segments: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def hadamard_count(self) -> int:
        return sum(ev.kind == HADAMARD for ev in self.events)

    @property
    def cp_count(self) -> int:
        return sum(ev.kind == CPHASE for ev in self.events)

    @property
    def phase_count(self) -> int:
        return sum(ev.kind == PHASE for ev in self.events)

    def counts(self) -> dict[str, int]:
        return {
            "hadamard": self.hadamard_count,
            "controlled_phase": self.cp_count,
            "single_phase": self.phase_count,
            "total": len(self.events),
        }

    def to_jsonl(self) -> str:
        return "\n".join(ev.to_json() for ev in self.events) + "\n"

    @staticmethod
    def events_from_jsonl(text: str) -> list[GateEvent]:
        out = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(GateEvent(rec["kind"], tuple(rec["t"]), rec.get("phi")))
        return out


def quadratic_form_events(pair_coeff: Iterable, single_coeff: Iterable, n_q: int, layout: str) -> list[GateEvent]:
    """Phase gates realizing ``sum_{i<m} c_im b_i b_m + sum_i d_i b_i``.

    ``layout="paper"`` splits each pair term over both qubit orderings
    (``n_q**2`` gates per form, the textbook count); ``"compact"`` emits one
    gate per unordered pair.
    """
    pair_coeff = np.asarray(pair_coeff, dtype=float)
    single_coeff = np.asarray(single_coeff, dtype=float)
    events = []
    for i in range(n_q):
        events.append(GateEvent(PHASE, (i,), _wrap(single_coeff[i])))
        for m in range(n_q):
            if m == i:
                continue
            if layout == LAYOUT_PAPER:
                events.append(GateEvent(CPHASE, (i, m), _wrap(0.5 * pair_coeff[min(i, m), max(i, m)])))
            elif layout == LAYOUT_COMPACT:
                if m > i:
                    events.append(GateEvent(CPHASE, (i, m), _wrap(pair_coeff[i, m])))
            else:
                raise DomainError(f"unknown layout {layout!r}")
    return events


def kick_coefficients(params: MapParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Expansion of ``k (theta_l - pi)**2 / 2`` over the angle-register bits."""
    n_q, big_n, k = params.n_q, params.big_n, params.k_strength
    c = 2.0 * math.pi**2 * k
    pw = 2.0 ** np.arange(n_q)
    pair = c * 2.0 * np.outer(pw, pw) / big_n**2
    single = c * (pw**2 / big_n**2 - pw / big_n)
    return pair, single, c / 4.0


def kinetic_coefficients(params: MapParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Expansion of ``-T n**2 / 2`` with ``n = j - N/2`` over the momentum-register bits."""
    n_q, big_n, t = params.n_q, params.big_n, params.t_kick
    c = -0.5 * t
    pw = 2.0 ** np.arange(n_q)
    pair = c * 2.0 * np.outer(pw, pw)
    single = c * (pw**2 - big_n * pw)
    return pair, single, c * big_n**2 / 4.0


def build_schedule(params: MapParams, layout: str = LAYOUT_PAPER) -> GateSchedule:
    """Gate list for one kick, momentum basis in and out.

    Order: backward QFT (momentum -> angle), kick phase, forward QFT
    (angle -> momentum), kinetic phase.
    """
    n_q = params.n_q
    events: list[GateEvent] = []
    segments = {}

    start = len(events)
    events += qft_events(n_q)
    segments["qft_backward"] = (start, len(events))
    marker = len(events)

    pair, single, g_kick = kick_coefficients(params)
    start = len(events)
    events += quadratic_form_events(pair, single, n_q, layout)
    segments["kick_phase"] = (start, len(events))

    relabel_fwd = len(events)
    start = len(events)
    events += qft_events(n_q, inverse=True)
    segments["qft_forward"] = (start, len(events))

    pair, single, g_kin = kinetic_coefficients(params)
    start = len(events)
    events += quadratic_form_events(pair, single, n_q, layout)
    segments["kinetic_phase"] = (start, len(events))

    return GateSchedule(
        n_q=n_q,
        events=events,
        relabel_before=(marker, relabel_fwd),
        marker=marker,
        global_phase=_wrap(g_kick + g_kin),
        layout=layout,
        segments=segments,
    )


def run_events(arr: np.ndarray, schedule: GateSchedule, after_gate=None, at_marker=None, counter: dict | None = None) -> np.ndarray:
    """Reference executor: apply every event in order, in place.

    ``after_gate(arr)`` runs after each gate event and ``at_marker(arr)``
    once at the marker position. ``counter["amplitude_updates"]`` is
    incremented by the number of amplitudes each gate touches.
    """
    dim = arr.shape[0]
    perm = bit_reversal_permutation(schedule.n_q)
    n_ev = len(schedule.events)
    for pos in range(n_ev + 1):
        if pos in schedule.relabel_before:
            arr[...] = arr[perm]
        if pos == schedule.marker and at_marker is not None:
            at_marker(arr)
        if pos == n_ev:
            break
        ev = schedule.events[pos]
        ev.apply_(arr)
        if counter is not None:
            touched = dim if ev.kind == HADAMARD else dim >> len(ev.targets)
            counter["amplitude_updates"] = counter.get("amplitude_updates", 0) + touched
        if after_gate is not None:
            after_gate(arr)
    arr *= np.exp(1j * schedule.global_phase)
    return arr
