"""Physical observables built on Floquet spectra and kicked evolutions.

Covers overlap matrices and eigenstate entropy, disorder-averaged entropy
scans and threshold extraction, fidelity series with their fits, Husimi
distributions, local density of states and the closed-form predictors.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .core import (
    MOMENTUM,
    ContractViolation,
    DiagnosticsError,
    DomainError,
    MapParams,
    NotFoundError,
    SeedPlan,
    StateVector,
    basis_state,
)
from .floquet import FloquetSpectrum, floquet_spectrum
from .gates import LAYOUT_PAPER
from .imperfect import SINGLE, DisorderRealization, ImperfectionSpec, sample_realization
from .sawtooth import KickProgram, ideal_kick_array

A_SINGLE = 0.37
B_STATIC = 0.25

# -- overlaps and entropy ---------------------------------------------------------------


@dataclass
class OverlapMatrix:
    """``p[alpha, beta] = |<phi_beta(0)|phi_alpha(eps)>|**2``."""

    p: np.ndarray

    def max_sum_defect(self) -> float:
        return float(max(np.abs(self.p.sum(axis=0) - 1).max(), np.abs(self.p.sum(axis=1) - 1).max()))


def overlap_matrix(spec0: FloquetSpectrum, spec_eps: FloquetSpectrum) -> OverlapMatrix:
    if spec0.dim != spec_eps.dim:
        raise ContractViolation(f"dimension mismatch: {spec0.dim} vs {spec_eps.dim}")
    amp = spec_eps.eigenvectors.conj().T @ spec0.eigenvectors
    return OverlapMatrix(np.abs(amp) ** 2)


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    return terms.sum(axis=-1)


def eigenstate_entropy(row) -> float:
    """Shannon entropy (bits) of one row of overlap weights, clamped to ``[0, log2 N]``."""
    row = np.asarray(row, dtype=float)
    if row.min() < -1e-12:
        raise ContractViolation(f"negative weight {row.min():.3e}")
    if abs(row.sum() - 1.0) > 1e-6:
        raise ContractViolation(f"weights sum to {row.sum():.8f}, not 1")
    s = float(_entropy_rows(np.clip(row, 0.0, None)))
    return min(max(s, 0.0), math.log2(row.size))


def entropies(om: OverlapMatrix) -> np.ndarray:
    n_q = math.log2(om.p.shape[1])
    return np.clip(_entropy_rows(np.clip(om.p, 0.0, None)), 0.0, n_q)


# -- entropy scans ----------------------------------------------------------------------


@dataclass
class EntropyRow:
    epsilon: float
    mean_S: float
    stderr_S: float
    n_realizations: int
    n_q: int
    model: str
    seeds: list = field(default_factory=list)
    per_realization: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and self.n_realizations > 0


@dataclass
class EntropyScan:
    rows: list[EntropyRow]

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows])

    @property
    def mean_S(self) -> np.ndarray:
        return np.array([r.mean_S for r in self.rows])

    def merged(self, other: EntropyScan) -> EntropyScan:
        rows = sorted(self.rows + other.rows, key=lambda r: r.epsilon)
        return EntropyScan(rows)


_SPEC0_CACHE: dict = {}


def unperturbed_spectrum(params: MapParams, layout: str = LAYOUT_PAPER) -> FloquetSpectrum:
    key = (params.n_q, params.cap_k, layout)
    if key not in _SPEC0_CACHE:
        _SPEC0_CACHE.clear()
        _SPEC0_CACHE[key] = floquet_spectrum(params, layout=layout)
    return _SPEC0_CACHE[key]


def realization_entropy(params: MapParams, spec: ImperfectionSpec, real: DisorderRealization, layout: str = LAYOUT_PAPER) -> float:
    """Mean eigenstate entropy over all perturbed eigenstates of one realization."""
    if spec.epsilon == 0 or real.is_zero:
        # identical operator, identical eigenbasis
        return 0.0
    sp0 = unperturbed_spectrum(params, layout)
    spe = floquet_spectrum(params, spec, real, layout)
    return float(entropies(overlap_matrix(sp0, spe)).mean())


def _entropy_task(args):
    n_q, cap_k, layout, spec, i, r, seed = args
    params = MapParams(n_q, cap_k)
    try:
        real = sample_realization(spec, n_q, seed)
        return i, r, seed, realization_entropy(params, spec, real, layout), None
    except (DiagnosticsError, ContractViolation) as exc:
        return i, r, seed, None, f"{type(exc).__name__}: {exc}"


def entropy_scan(
    params: MapParams,
    spec_template: ImperfectionSpec,
    eps_grid,
    n_realizations: int = 10,
    seed_plan: SeedPlan | None = None,
    layout: str = LAYOUT_PAPER,
    jobs: int = 1,
    eps_index_offset: int = 0,
) -> EntropyScan:
    """Disorder-averaged mean eigenstate entropy for every epsilon of the grid.

    Each (epsilon, realization) task gets its own derived seed; the mean is
    over all ``N`` eigenstates and all realizations, the standard error over
    realization means.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ContractViolation("eps_grid is empty")
    seed_plan = seed_plan or SeedPlan()
    tasks = []
    for i, eps in enumerate(eps_grid):
        spec = spec_template.with_epsilon(eps)
        for r in range(n_realizations):
            seed = seed_plan.task_seed(params.n_q, i + eps_index_offset, r)
            tasks.append((params.n_q, params.cap_k, layout, spec, i, r, seed))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_entropy_task, tasks))
    else:
        results = [_entropy_task(t) for t in tasks]

    rows = []
    for i, eps in enumerate(eps_grid):
        mine = sorted((res for res in results if res[0] == i), key=lambda res: res[1])
        vals = [res[3] for res in mine if res[3] is not None]
        fails = [(res[1], res[4]) for res in mine if res[4] is not None]
        mean = float(np.mean(vals)) if vals else float("nan")
        err = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(
            EntropyRow(eps, mean, err, len(vals), params.n_q, spec_template.model, [res[2] for res in mine], vals, fails)
        )
    return EntropyScan(rows)


@dataclass
class Threshold:
    eps_chi: float
    bracket: tuple[float, float]
    s_bracket: tuple[float, float]


def find_threshold(scan: EntropyScan, level: float = 1.0, scale: str = "log") -> Threshold:
    """Epsilon where the mean entropy first reaches ``level``.

    Interpolates linearly in ``(log eps, S)`` (``scale="log"``) or in
    ``(eps, S)`` (``scale="linear"``) between the bracketing grid points.
    """
    pts = sorted((r.epsilon, r.mean_S) for r in scan.rows if np.isfinite(r.mean_S))
    if scale == "log":
        pts = [(e, s) for e, s in pts if e > 0]
    for (e0, s0), (e1, s1) in zip(pts, pts[1:]):
        if s0 < level <= s1:
            frac = (level - s0) / (s1 - s0)
            if scale == "log":
                eps = math.exp(math.log(e0) + frac * (math.log(e1) - math.log(e0)))
            else:
                eps = e0 + frac * (e1 - e0)
            return Threshold(eps, (e0, e1), (s0, s1))
    if pts and pts[-1][1] < level:
        hint = "extend the grid to larger epsilon"
    elif pts and pts[0][1] >= level:
        hint = "extend the grid to smaller epsilon"
    else:
        hint = "add grid points"
    raise NotFoundError(f"no bracket around S={level}: {hint}")


# -- fidelity ---------------------------------------------------------------------------


@dataclass
class FidelitySeries:
    t: np.ndarray
    f: np.ndarray
    init: str


def resolve_init(params: MapParams, init, layout: str = LAYOUT_PAPER) -> np.ndarray:
    """Initial amplitudes (axis 0) for ``("eig", idx)``, ``("mom", n)`` or a tag string like ``"eig:5"``.

    A list of indices gives a batch (one column per state).
    """
    if isinstance(init, str):
        kind, _, val = init.partition(":")
        init = (kind, int(val))
    kind, which = init
    many = np.ndim(which) > 0
    idx = np.atleast_1d(which)
    if kind == "eig":
        vecs = unperturbed_spectrum(params, layout).eigenvectors
        if idx.min() < 0 or idx.max() >= params.big_n:
            raise DomainError(f"eigenstate index outside [0, {params.big_n})")
        out = vecs[:, idx].copy()
    elif kind == "mom":
        out = np.stack([basis_state(params, int(n)).amps for n in idx], axis=1)
    else:
        raise DomainError(f"unknown init kind {kind!r}")
    return np.ascontiguousarray(out if many else out[:, 0])


def init_tag(init) -> str:
    if isinstance(init, str):
        return init
    kind, which = init
    if np.ndim(which) > 0:
        return f"{kind}:[{','.join(str(int(w)) for w in which)}]"
    return f"{kind}:{int(which)}"


def fidelity_array(params: MapParams, spec, real, psi0: np.ndarray, t_max: int, layout: str = LAYOUT_PAPER) -> np.ndarray:
    """``f[t, ...]`` for ``t = 0..t_max``; ``psi0`` may hold a batch of states along axis 1."""
    ideal = np.ascontiguousarray(psi0, dtype=np.complex128).copy()
    pert = ideal.copy()
    prog = KickProgram(params, spec, real, layout)
    out = np.empty((t_max + 1,) + psi0.shape[1:])
    out[0] = 1.0
    for t in range(1, t_max + 1):
        ideal = ideal_kick_array(ideal, params)
        prog.apply_(pert)
        out[t] = np.abs(np.sum(ideal.conj() * pert, axis=0)) ** 2
    return np.minimum(out, 1.0)


def fidelity_series(params: MapParams, spec, real, init, t_max: int, layout: str = LAYOUT_PAPER) -> FidelitySeries:
    """Co-evolve the ideal and the imperfect register from the same state and record ``|<psi0|psi_eps>|**2``."""
    psi0 = resolve_init(params, init, layout)
    f = fidelity_array(params, spec, real, psi0, t_max, layout)
    return FidelitySeries(np.arange(t_max + 1), f, init_tag(init))


@dataclass
class DecayFit:
    rate: float
    intercept: float
    window: tuple[int, int]
    n_points: int

    @property
    def t_f(self) -> float:
        return 1.0 / self.rate if self.rate > 0 else math.inf


def plateau(f: np.ndarray, start_fraction: float = 0.5) -> float:
    """Long-time mean of a fidelity series (the saturation floor)."""
    f = np.asarray(f)
    return float(f[int(len(f) * start_fraction) :].mean())


def fit_exponential(t, f, floor: float = 0.0, t_skip: int = 3) -> DecayFit:
    """Least-squares fit of ``f = exp(c - t / t_f) + floor`` (linear in ``ln(f - floor)``).

    Window: ``t >= t_skip`` up to (excluding) the first point below
    ``3 * floor``, so the fitted excess stays well above the plateau noise.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    sel = t >= t_skip
    below = np.nonzero(sel & (f < 3.0 * floor))[0]
    stop = below[0] if below.size else len(t)
    sel &= np.arange(len(t)) < stop
    sel &= f > floor
    if sel.sum() < 3:
        raise DiagnosticsError("fewer than three points in the exponential fit window")
    slope, icpt = np.polyfit(t[sel], np.log(f[sel] - floor), 1)
    idx = np.nonzero(sel)[0]
    return DecayFit(-float(slope), float(icpt), (int(t[idx[0]]), int(t[idx[-1]])), int(sel.sum()))


@dataclass
class ShortTimeComparison:
    gaussian_residual: float
    linear_residual: float
    window: tuple[int, int]

    @property
    def gaussian_preferred(self) -> bool:
        return self.gaussian_residual < self.linear_residual


def compare_short_time(t, f, f_min: float = 0.5, t_max: int | None = None) -> ShortTimeComparison:
    """Fit ``-ln f`` at short times by ``a t`` and by ``b t**2`` (both through the origin).

    Window: ``1 <= t`` until ``f`` first drops below ``f_min`` (or ``t_max``).
    """
    t = np.asarray(t, dtype=float)
    y = -np.log(np.clip(np.asarray(f, dtype=float), 1e-300, None))
    end = len(t)
    below = np.nonzero(np.asarray(f) < f_min)[0]
    if below.size:
        end = below[0]
    if t_max is not None:
        end = min(end, int(np.searchsorted(t, t_max, side="right")))
    sel = (t >= 1) & (np.arange(len(t)) < end)
    if sel.sum() < 3:
        raise DiagnosticsError("short-time window has fewer than three points")
    x, yy = t[sel], y[sel]
    res = {}
    for name, basis in (("lin", x), ("gauss", x**2)):
        coef = basis @ yy / (basis @ basis)
        res[name] = float(np.sum((yy - coef * basis) ** 2))
    idx = np.nonzero(sel)[0]
    return ShortTimeComparison(res["gauss"], res["lin"], (int(t[idx[0]]), int(t[idx[-1]])))


# -- Husimi -----------------------------------------------------------------------------


@dataclass
class HusimiGrid:
    """``values[b, a]`` at ``p = p[b]``, ``theta = theta[a]`` (cell centers)."""

    theta: np.ndarray
    p: np.ndarray
    values: np.ndarray
    s: float

    @property
    def cell_area(self) -> float:
        return (2 * math.pi / self.theta.size) * (2 * math.pi / self.p.size)

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def reflected(self) -> np.ndarray:
        """Values at ``(2 pi - theta, -p)``; exact on the centered grid."""
        return self.values[::-1, ::-1]

    def symmetry_deviation(self) -> float:
        """``sum |H - H_reflected| / sum H``."""
        return float(np.abs(self.values - self.reflected()).sum() / self.values.sum())

    def argmax(self) -> tuple[float, float]:
        b, a = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.theta[a]), float(self.p[b])


def coherent_momentum_profile(params: MapParams, p0, s: float = 1.0, images: int = 3) -> np.ndarray:
    """Unnormalized ``|<n|coh(., p0)>|`` envelopes, shape ``(len(p0), N)``."""
    t = params.t_kick
    var_p = s * t / 2.0
    pn = t * params.momenta()[None, :]
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))[:, None]
    g = np.zeros((p0.shape[0], params.big_n))
    for m in range(-images, images + 1):
        g += np.exp(-((pn - p0 + 2 * math.pi * m) ** 2) / (4.0 * var_p))
    return g


def coherent_state(params: MapParams, theta0: float, p0: float, s: float = 1.0) -> StateVector:
    """Normalized torus coherent state in the momentum basis."""
    g = coherent_momentum_profile(params, p0, s)[0]
    amps = g * np.exp(-1j * params.momenta() * theta0)
    return StateVector(amps / np.linalg.norm(amps), MOMENTUM)


def husimi(state: StateVector, grid: tuple[int, int] = (64, 64), s: float = 1.0, params: MapParams | None = None) -> HusimiGrid:
    """Husimi distribution ``|<coh(theta0, p0)|psi>|**2`` on a cell-centered grid.

    ``grid`` is ``(n_theta, n_p)``; ``s = dp/dtheta`` with
    ``dp * dtheta = T / 2``.
    """
    if s <= 0:
        raise DomainError("uncertainty ratio s must be > 0")
    if state.basis != MOMENTUM:
        raise ContractViolation("husimi expects a momentum-basis state")
    params = params or MapParams(state.n_q)
    n_theta, n_p = grid
    theta = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    p = -math.pi + 2 * math.pi * (np.arange(n_p) + 0.5) / n_p
    g = coherent_momentum_profile(params, p, s)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    phase = np.exp(1j * np.outer(params.momenta(), theta))
    amp = (g * state.amps[None, :]) @ phase
    return HusimiGrid(theta, p, np.abs(amp) ** 2, s)


# -- local density of states ------------------------------------------------------------


def wrapped_lorentzian(x, center: float, fwhm: float) -> np.ndarray:
    """Density on the circle of a wrapped Cauchy law with full width ``fwhm``."""
    rho = math.exp(-fwhm / 2.0)
    return (1 - rho**2) / (2 * math.pi * (1 + rho**2 - 2 * rho * np.cos(np.asarray(x) - center)))


@dataclass
class LDOS:
    phases: np.ndarray
    weights: np.ndarray
    gamma: float
    center: float
    perturbative: bool = False


def _circ_mean(x, w) -> float:
    return float(np.angle(np.sum(w * np.exp(1j * np.asarray(x)))))


def fit_breit_wigner(phases, weights, spacing: float) -> tuple[float, float]:
    """Least-squares wrapped-Lorentzian fit of ``weights ~ spacing * L(phase)``.

    Returns ``(fwhm, center)``.
    """
    phases = np.asarray(phases, dtype=float)
    weights = np.asarray(weights, dtype=float)
    c0 = _circ_mean(phases, weights)
    ipr = float(np.sum(weights**2) / np.sum(weights) ** 2)
    g0 = min(max(spacing / max(ipr, 1e-12) / math.pi, spacing), math.pi)

    def resid(x):
        return spacing * wrapped_lorentzian(phases, x[1], math.exp(x[0])) - weights

    sol = least_squares(resid, x0=[math.log(g0), c0], method="lm")
    return float(math.exp(sol.x[0])), float(np.angle(np.exp(1j * sol.x[1])))


def ldos(phi_eps: np.ndarray, spec0: FloquetSpectrum) -> LDOS:
    """Weights of one perturbed eigenvector over the unperturbed quasienergies, with fitted width."""
    phi_eps = np.asarray(phi_eps.amps if isinstance(phi_eps, StateVector) else phi_eps)
    if phi_eps.shape[0] != spec0.dim:
        raise ContractViolation("eigenvector and spectrum dimensions differ")
    w = np.abs(spec0.eigenvectors.conj().T @ phi_eps) ** 2
    if w.max() > 1 - 1e-6:
        return LDOS(spec0.eigenphases, w, 0.0, float(spec0.eigenphases[np.argmax(w)]), True)
    gamma, center = fit_breit_wigner(spec0.eigenphases, w, 2 * math.pi / spec0.dim)
    return LDOS(spec0.eigenphases, w, gamma, center)


def pooled_ldos_width(spec0: FloquetSpectrum, spec_eps: FloquetSpectrum, alphas=None) -> float:
    """Breit-Wigner width from the LDOS of many eigenstates, each centered on its own quasienergy."""
    alphas = np.arange(spec_eps.dim) if alphas is None else np.asarray(alphas)
    w = np.abs(spec0.eigenvectors.conj().T @ spec_eps.eigenvectors[:, alphas]) ** 2
    off = np.angle(np.exp(1j * (spec0.eigenphases[:, None] - spec_eps.eigenphases[None, alphas])))
    gamma, _ = fit_breit_wigner(off.ravel(), w.ravel(), 2 * math.pi / spec0.dim)
    return gamma


# -- closed-form predictors -------------------------------------------------------------

FORMULAS = ("entropy_single", "entropy_static", "threshold_single", "threshold_static", "gamma", "tau_chi")


@dataclass(frozen=True)
class TheoryPrediction:
    model: str = "static"
    a: float = A_SINGLE
    b: float = B_STATIC

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise DomainError("constants A and B must be positive")

    def __call__(self, formula: str, eps: float | None, n_q: int) -> float:
        return predict(formula, eps, n_q, self.a, self.b, self.model)


def predict(formula: str, eps: float | None, n_q: int, a: float = A_SINGLE, b: float = B_STATIC, model: str = "static") -> float:
    """Closed-form scaling predictions.

    ``gamma`` and ``tau_chi`` are scaling forms only (no prefactor):
    ``eps**2`` for the single impurity, ``eps**2 * n_q**5`` for the chain.
    """
    if formula not in FORMULAS:
        raise DomainError(f"unknown formula {formula!r}")
    big_n = 2.0**n_q
    if formula == "threshold_single":
        return a**-0.5 * big_n**-0.5
    if formula == "threshold_static":
        return b**-0.5 * big_n**-0.5 * n_q**-2.5
    if eps is None or eps <= 0:
        raise DomainError("epsilon must be positive")
    if formula == "entropy_single":
        return math.log2(a * eps**2 * big_n)
    if formula == "entropy_static":
        return math.log2(b * eps**2 * n_q**5 * big_n)
    gamma = eps**2 if model == SINGLE else eps**2 * n_q**5
    return gamma if formula == "gamma" else 1.0 / gamma


def predicted_threshold(model: str, n_q: int, a: float = A_SINGLE, b: float = B_STATIC) -> float:
    return predict("threshold_single" if model == SINGLE else "threshold_static", None, n_q, a, b, model)
