"""Floquet operator of one kick: dense build, certified eigendecomposition, level tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .core import ContractViolation, DiagnosticsError, MapParams, ResourceError
from .gates import LAYOUT_PAPER
from .imperfect import DisorderRealization, ImperfectionSpec
from .sawtooth import KickProgram, ideal_kick_array

DEFAULT_MAX_QUBITS = 12
RESIDUAL_TOL = 1e-8
FLAG_OVERLAP = 0.5

# full O(N^3) unitarity check up to this size, random probes above
_DENSE_CHECK_DIM = 1024
# Cayley-transform rotations tried before falling back to a Schur form
_CAYLEY_ROTATIONS = (0.0, 0.5 * (math.sqrt(5.0) - 1.0), -1.2345)


def unitarity_defect(u: np.ndarray, probes: int = 8, rng: np.random.Generator | None = None) -> float:
    """``max |U^H U - I|`` for small ``U``; a probe-based estimate for large ones."""
    dim = u.shape[0]
    if dim <= _DENSE_CHECK_DIM:
        return float(np.abs(u.conj().T @ u - np.eye(dim)).max())
    rng = rng or np.random.default_rng(0)
    x = rng.normal(size=(dim, probes)) + 1j * rng.normal(size=(dim, probes))
    x /= np.linalg.norm(x, axis=0)
    return float(np.abs(u.conj().T @ (u @ x) - x).max())


def build_floquet_matrix(
    params: MapParams,
    spec: ImperfectionSpec | None = None,
    real: DisorderRealization | None = None,
    layout: str = LAYOUT_PAPER,
    max_qubits: int = DEFAULT_MAX_QUBITS,
    check: bool = True,
) -> np.ndarray:
    """Dense one-kick unitary; column ``j`` is the gate-level kick of basis state ``j``."""
    if params.n_q > max_qubits:
        dim = params.big_n
        raise ResourceError(
            f"n_q={params.n_q} needs a dense {dim}x{dim} matrix (~{dim * dim * 16 / 2**30:.1f} GiB); "
            f"limit is n_q={max_qubits}. Use fidelity runs, which never build the matrix."
        )
    u = np.eye(params.big_n, dtype=np.complex128)
    KickProgram(params, spec, real, layout).apply_(u)
    if check:
        defect = unitarity_defect(u)
        if defect > RESIDUAL_TOL:
            raise DiagnosticsError(f"Floquet matrix unitarity defect {defect:.3e}", defect)
    return u


def split_operator_matrix(params: MapParams) -> np.ndarray:
    """Ideal Floquet matrix from the FFT split-operator kick (independent of the gate path)."""
    return ideal_kick_array(np.eye(params.big_n, dtype=np.complex128), params)


@dataclass
class FloquetSpectrum:
    eigenphases: np.ndarray
    eigenvectors: np.ndarray
    max_residual: float
    orthonormality_defect: float

    @property
    def dim(self) -> int:
        return self.eigenphases.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.exp(1j * self.eigenphases)


def _fix_gauge(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    pivot = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.conj(pivot) / np.abs(pivot))


def _certify(u: np.ndarray, vecs: np.ndarray, phases: np.ndarray) -> tuple[float, float]:
    resid = np.linalg.norm(u @ vecs - vecs * np.exp(1j * phases), axis=0).max()
    orth = np.abs(vecs.conj().T @ vecs - np.eye(vecs.shape[1])).max()
    return float(resid), float(orth)


def _cayley_eig(u: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    # A = i (I - V)(I + V)^-1 with V = exp(-i alpha) U is Hermitian with
    # eigenvalues tan(phase/2); the map is one-to-one away from phase = pi.
    dim = u.shape[0]
    v = u * np.exp(-1j * alpha)
    eye = np.eye(dim)
    a = 1j * np.linalg.solve((eye + v).T, (eye - v).T).T
    a = 0.5 * (a + a.conj().T)
    _, vecs = sla.eigh(a, driver="evd", overwrite_a=True, check_finite=False)
    phases = np.angle(np.einsum("ij,ij->j", vecs.conj(), u @ vecs))
    return phases, vecs


def _schur_eig(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t, z = sla.schur(u, output="complex")
    return np.angle(np.diag(t)), z


def eigendecompose(u: np.ndarray, tol: float = RESIDUAL_TOL) -> FloquetSpectrum:
    """Eigenphases in ``(-pi, pi]`` (ascending) and orthonormal eigenvectors of a unitary.

    A Cayley transform reduces the problem to a Hermitian one; a complex
    Schur form is the fallback. The result is always certified: residuals
    ``|U phi - exp(i lambda) phi|`` and orthonormality must be below ``tol``.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ContractViolation("expected a square matrix")
    defect = unitarity_defect(u)
    if defect > 1e-6:
        raise ContractViolation(f"matrix is not unitary (defect {defect:.3e})")

    worst = math.inf
    attempts = [lambda a=a: _cayley_eig(u, a) for a in _CAYLEY_ROTATIONS] + [lambda: _schur_eig(u)]
    for attempt in attempts:
        try:
            phases, vecs = attempt()
        except np.linalg.LinAlgError:
            continue
        resid, orth = _certify(u, vecs, phases)
        if resid < tol and orth < tol:
            order = np.argsort(phases, kind="stable")
            vecs = _fix_gauge(vecs[:, order])
            return FloquetSpectrum(phases[order], vecs, resid, orth)
        worst = min(worst, max(resid, orth))
    raise DiagnosticsError(f"eigendecomposition not certified: worst residual {worst:.3e}", worst)


def floquet_spectrum(params: MapParams, spec=None, real=None, layout: str = LAYOUT_PAPER, max_qubits: int = DEFAULT_MAX_QUBITS) -> FloquetSpectrum:
    return eigendecompose(build_floquet_matrix(params, spec, real, layout, max_qubits))


# -- level tracking ---------------------------------------------------------------


@dataclass
class SpectralSweep:
    """Eigenphase branches over an ordered epsilon grid.

    ``levels[k, b]`` is the eigenvalue index (at grid point ``k``) of branch
    ``b``; branches are labeled by their index at the first grid point.
    ``overlaps[k, b]`` is the continuation overlap ``|<old|new>|**2`` of the
    step into point ``k`` (NaN at ``k = 0``). ``origin_weight[k, b]`` is the
    weight ``|<phi_b(eps_0)|phi_b(eps_k)>|**2`` the continued branch keeps on
    its own first-grid-point eigenvector.
    """

    epsilons: np.ndarray
    eigenphases: np.ndarray
    levels: np.ndarray
    overlaps: np.ndarray
    origin_weight: np.ndarray | None = None
    spectra: list = field(default_factory=list, repr=False)

    @property
    def branches(self) -> np.ndarray:
        """``branches[k, b]``: eigenphase of branch ``b`` at grid point ``k``."""
        return np.take_along_axis(self.eigenphases, self.levels, axis=1)

    @property
    def flagged(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.overlaps < FLAG_OVERLAP

    def first_flag(self, branch: int) -> float | None:
        """Epsilon of the first flagged continuation step of ``branch``."""
        hit = np.nonzero(self.flagged[:, branch])[0]
        return float(self.epsilons[hit[0]]) if hit.size else None

    def first_crossing(self, branch: int, level: float = 0.5) -> float | None:
        """Epsilon where the branch first becomes an equal-or-worse mixture of its origin.

        At the centre of an avoided crossing the continued eigenvector is an
        even superposition of the two crossing states, so its origin weight
        passes through one half; this is insensitive to the grid step.
        """
        if self.origin_weight is None:
            return None
        hit = np.nonzero(self.origin_weight[:, branch] < level)[0]
        return float(self.epsilons[hit[0]]) if hit.size else None

    def rows(self):
        for k, eps in enumerate(self.epsilons):
            br = self.branches[k]
            for b in range(br.shape[0]):
                ov = self.overlaps[k, b]
                yield {
                    "eps": float(eps),
                    "branch_id": b,
                    "eigenphase": float(br[b]),
                    "continuation_overlap": "" if np.isnan(ov) else float(ov),
                    "flagged": int(bool(ov < FLAG_OVERLAP)) if not np.isnan(ov) else 0,
                }


def continuation(prev: FloquetSpectrum, nxt: FloquetSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """Match eigenvectors across a grid step by maximal total overlap.

    Returns ``(assign, overlap)`` with ``assign[i]`` the index in ``nxt``
    continuing level ``i`` of ``prev`` and ``overlap[i] = |<prev_i|nxt_assign[i]>|**2``.
    """
    ov = np.abs(prev.eigenvectors.conj().T @ nxt.eigenvectors) ** 2
    rows, cols = linear_sum_assignment(-ov)
    assign = np.empty(prev.dim, dtype=int)
    assign[rows] = cols
    return assign, ov[np.arange(prev.dim), assign]


def sweep_spectrum(
    params: MapParams,
    spec_template: ImperfectionSpec,
    real: DisorderRealization,
    eps_grid,
    layout: str = LAYOUT_PAPER,
    keep_spectra: bool = False,
) -> SpectralSweep:
    """Track quasienergy branches while only the imperfection strength varies.

    ``real`` must have been drawn at ``spec_template``; at grid value ``eps``
    it is rescaled by ``eps / spec_template.epsilon``.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.ndim != 1 or eps_grid.size == 0 or np.any(np.diff(eps_grid) < 0):
        raise ContractViolation("eps_grid must be a non-empty ascending sequence")
    ref = spec_template.epsilon
    if ref <= 0:
        raise ContractViolation("spec_template must have positive epsilon to fix the disorder shape")
    dim = params.big_n
    phases = np.empty((eps_grid.size, dim))
    levels = np.empty((eps_grid.size, dim), dtype=int)
    overlaps = np.full((eps_grid.size, dim), np.nan)
    origin = np.empty((eps_grid.size, dim))
    spectra = []
    prev = first = None
    for k, eps in enumerate(eps_grid):
        if eps == 0:
            sp = floquet_spectrum(params, layout=layout)
        else:
            sp = floquet_spectrum(params, spec_template.with_epsilon(eps), real.scaled(eps / ref), layout)
        phases[k] = sp.eigenphases
        if prev is None:
            levels[k] = np.arange(dim)
            first = sp.eigenvectors
        else:
            assign, ov = continuation(prev, sp)
            levels[k] = assign[levels[k - 1]]
            overlaps[k] = ov[levels[k - 1]]
        origin[k] = np.abs(np.einsum("ij,ij->j", first.conj(), sp.eigenvectors[:, levels[k]])) ** 2
        prev = sp
        if keep_spectra:
            spectra.append(sp)
    return SpectralSweep(eps_grid, phases, levels, overlaps, origin, spectra)


# -- level statistics ------------------------------------------------------------


def parity_permutation(params: MapParams) -> np.ndarray:
    """Storage index of ``-n (mod N)`` for every momentum index."""
    big_n = params.big_n
    return (big_n - np.arange(big_n)) % big_n


def parity_expectation(spectrum: FloquetSpectrum, params: MapParams) -> np.ndarray:
    vecs = spectrum.eigenvectors
    perm = parity_permutation(params)
    return np.real(np.einsum("ij,ij->j", vecs.conj(), vecs[perm]))


def unfolded_spacings(phases: np.ndarray) -> np.ndarray:
    """Nearest-neighbour spacings on the circle in units of the mean spacing."""
    ph = np.sort(np.mod(phases, 2 * math.pi))
    gaps = np.diff(np.concatenate([ph, ph[:1] + 2 * math.pi]))
    return gaps * ph.size / (2 * math.pi)


def spacings(spectrum: FloquetSpectrum, params: MapParams | None = None, desymmetrize: bool = True) -> np.ndarray:
    """Unfolded spacings, pooled over momentum-parity sectors when ``desymmetrize``.

    The ideal map commutes with ``n -> -n``; levels of opposite parity do not
    repel, so mixing the two sectors would hide level repulsion.
    """
    if not desymmetrize:
        return unfolded_spacings(spectrum.eigenphases)
    if params is None:
        raise ContractViolation("params are needed to split parity sectors")
    par = parity_expectation(spectrum, params)
    parts = [unfolded_spacings(spectrum.eigenphases[mask]) for mask in (par >= 0, par < 0) if mask.sum() > 1]
    return np.concatenate(parts)


def wigner_cdf(s):
    return 1.0 - np.exp(-math.pi * np.asarray(s) ** 2 / 4.0)


def poisson_cdf(s):
    return 1.0 - np.exp(-np.asarray(s))


def kolmogorov_distance(samples: np.ndarray, cdf) -> float:
    return float(stats.kstest(np.asarray(samples), cdf).statistic)
