"""Experiment orchestration and result persistence.

Every run writes ``<experiment>-<timestamp>.csv``, a sidecar ``.meta.json``
and ``.manifest.json``; ``manifest.json`` in the output directory is a copy of
the most recent manifest. The manifest echoes the full config, so re-running
it reproduces the CSV byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import DiagnosticsError, MapParams, NotFoundError, SeedPlan, StateVector
from ..diagnostics import (
    EntropyScan,
    compare_short_time,
    entropy_scan,
    find_threshold,
    fit_exponential,
    husimi,
    plateau,
    predict,
    predicted_threshold,
    realization_entropy,
    resolve_init,
    fidelity_array,
)
from ..floquet import sweep_spectrum
from ..gates import build_schedule
from ..imperfect import SINGLE, ImperfectionSpec, sample_realization
from .config import ExperimentConfig, validate

# seed-index slot reserved for single-realization experiments
_FIXED_EPS_INDEX = 0


@dataclass
class RunResult:
    csv_path: Path
    meta_path: Path
    manifest_path: Path
    status: str = "ok"
    meta: dict = field(default_factory=dict)

    @property
    def partial_failure(self) -> bool:
        return self.status != "ok"


def spec_template(cfg: ExperimentConfig, epsilon: float = 1.0) -> ImperfectionSpec:
    return ImperfectionSpec.from_epsilon(epsilon, cfg.model, cfg.j_coupling, cfg.tau_g, cfg.qubit)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[h]) for h in header])
    return buf.getvalue()


def _matrix_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    for row in values:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _stamp(out: Path, experiment: str) -> str:
    base = f"{experiment}-{datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%S')}"
    stem, k = base, 1
    while (out / f"{stem}.csv").exists():
        stem = f"{base}-{k}"
        k += 1
    return stem


def _write(cfg: ExperimentConfig, csv_text: str, meta: dict, tasks: list, status: str, started: float, extra_files: dict | None = None) -> RunResult:
    out = Path(cfg.out)
    stem = _stamp(out, cfg.experiment)
    csv_path = out / f"{stem}.csv"
    meta_path = out / f"{stem}.meta.json"
    csv_path.write_text(csv_text, newline="")
    for name, text in (extra_files or {}).items():
        (out / f"{stem}.{name}").write_text(text, newline="")
    meta = {"experiment": cfg.experiment, "status": status, **meta}
    meta_path.write_text(json.dumps(meta, indent=2, default=_json_default))
    manifest = {
        "config": cfg.to_dict(),
        "tool": "sawtooth-qc",
        "version": __version__,
        "outputs": {"csv": csv_path.name, "meta": meta_path.name, "extra": sorted(f"{stem}.{n}" for n in (extra_files or {}))},
        "gate_counts": meta.get("gate_counts"),
        "tasks": tasks,
        "status": status,
        "wall_time_s": round(time.time() - started, 3),
    }
    manifest_path = out / f"{stem}.manifest.json"
    text = json.dumps(manifest, indent=2, default=_json_default)
    manifest_path.write_text(text)
    (out / "manifest.json").write_text(text)
    return RunResult(csv_path, meta_path, manifest_path, status, meta)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _gate_counts(cfg: ExperimentConfig, n_q: int) -> dict:
    return build_schedule(MapParams(n_q, cfg.cap_k), cfg.layout).counts()


def _frozen_realization(cfg: ExperimentConfig, n_q: int, epsilon: float):
    plan = SeedPlan(cfg.seed)
    seed = plan.task_seed(n_q, _FIXED_EPS_INDEX, 0)
    spec = spec_template(cfg, epsilon)
    return spec, sample_realization(spec, n_q, seed), seed


# -- spectrum / husimi ----------------------------------------------------------------


def _husimi_payload(cfg, params, sweep, eps_targets, branch):
    extra, info = {}, []
    for eps in eps_targets:
        k = int(np.argmin(np.abs(sweep.epsilons - eps)))
        level = int(sweep.levels[k, branch])
        vec = sweep.spectra[k].eigenvectors[:, level]
        hg = husimi(StateVector(vec), cfg.grid, cfg.s, params)
        name = f"husimi-eps{sweep.epsilons[k]:.3e}.csv"
        extra[name] = _matrix_csv(hg.values)
        info.append(
            {
                "eps": float(sweep.epsilons[k]),
                "level_index": level,
                "file": name,
                "symmetry_deviation": hg.symmetry_deviation(),
                "grid_integral": hg.integral(),
                "expected_integral": 2 * math.pi * params.t_kick,
                "theta_centers": hg.theta.tolist(),
                "p_centers": hg.p.tolist(),
            }
        )
    return extra, info


def _crossing_summary(sweep) -> dict:
    """Where branches first reach an even mixture with a neighbour (over all branches)."""
    eps = [sweep.first_crossing(b) for b in range(sweep.levels.shape[1])]
    hit = np.array([e for e in eps if e is not None])
    out = {"n_branches": len(eps), "n_crossed": int(hit.size)}
    if hit.size:
        q = np.percentile(hit, [25, 50, 75])
        out.update({"q25": float(q[0]), "median": float(q[1]), "q75": float(q[2])})
    return out


def run_spectrum(cfg: ExperimentConfig) -> RunResult:
    """Quasienergy branches versus epsilon for one frozen realization."""
    validate(cfg)
    started = time.time()
    params = MapParams(cfg.n_q, cfg.cap_k)
    grid = cfg.eps_grid()
    ref = max(grid) if max(grid) > 0 else 1.0
    spec, real, seed = _frozen_realization(cfg, cfg.n_q, ref)
    want_husimi = bool(cfg.husimi_eps)
    sweep = sweep_spectrum(params, spec, real, grid, cfg.layout, keep_spectra=want_husimi)
    header = ["eps", "branch_id", "eigenphase", "continuation_overlap", "flagged"]
    csv_text = _csv_text(header, sweep.rows())
    extra, info = ({}, [])
    if want_husimi:
        extra, info = _husimi_payload(cfg, params, sweep, cfg.husimi_eps, cfg.level)
    meta = {
        "n_q": cfg.n_q,
        "realization": real.to_dict(),
        "tracked_level": cfg.level,
        "first_flag_eps": sweep.first_flag(cfg.level),
        "first_crossing_eps": sweep.first_crossing(cfg.level),
        "crossing_summary": _crossing_summary(sweep),
        "gate_counts": _gate_counts(cfg, cfg.n_q),
        "husimi": info,
    }
    tasks = [{"task": "sweep", "seed": seed, "status": "ok"}]
    return _write(cfg, csv_text, meta, tasks, "ok", started, extra)


def run_husimi(cfg: ExperimentConfig) -> RunResult:
    """Husimi functions of one tracked level at the requested epsilons.

    The level (index at eps = 0) is followed through a linear epsilon grid
    from 0 to the largest requested value.
    """
    validate(cfg)
    started = time.time()
    params = MapParams(cfg.n_q, cfg.cap_k)
    targets = sorted(set(cfg.husimi_eps or cfg.eps_grid()))
    top = max(targets)
    grid = sorted(set([0.0] + list(np.linspace(0.0, top, max(cfg.eps_count, 2))) + targets)) if top > 0 else [0.0]
    spec, real, seed = _frozen_realization(cfg, cfg.n_q, top if top > 0 else 1.0)
    sweep = sweep_spectrum(params, spec, real, grid, cfg.layout, keep_spectra=True)
    extra, info = _husimi_payload(cfg, params, sweep, targets, cfg.level)
    rows = [{k: v for k, v in rec.items() if k in ("eps", "level_index", "symmetry_deviation", "grid_integral", "file")} for rec in info]
    csv_text = _csv_text(["eps", "level_index", "symmetry_deviation", "grid_integral", "file"], rows)
    meta = {
        "n_q": cfg.n_q,
        "realization": real.to_dict(),
        "grid": list(cfg.grid),
        "s": cfg.s,
        "tracking_grid": grid,
        "husimi": info,
        "gate_counts": _gate_counts(cfg, cfg.n_q),
    }
    tasks = [{"task": "sweep", "seed": seed, "status": "ok"}]
    return _write(cfg, csv_text, meta, tasks, "ok", started, extra)


# -- entropy / threshold ------------------------------------------------------------------


def _theory_entropy(cfg, eps, n_q):
    """Strong-mixing law; left blank where it goes negative (far below threshold)."""
    if eps <= 0:
        return ""
    formula = "entropy_single" if cfg.model == SINGLE else "entropy_static"
    s = predict(formula, eps, n_q, cfg.a_const, cfg.b_const)
    return s if s >= 0.0 else ""


def _scan_rows(cfg, scan: EntropyScan):
    for r in scan.rows:
        yield {
            "epsilon": r.epsilon,
            "mean_S": r.mean_S,
            "stderr_S": r.stderr_S,
            "two_pow_S": 2.0**r.mean_S if math.isfinite(r.mean_S) else float("nan"),
            "n_realizations": r.n_realizations,
            "n_q": r.n_q,
            "model": r.model,
            "S_theory": _theory_entropy(cfg, r.epsilon, r.n_q),
            "status": "ok" if r.ok else "failed",
        }


def _scan_tasks(scan: EntropyScan):
    tasks = []
    for r in scan.rows:
        failed = dict(r.failures)
        for k, seed in enumerate(r.seeds):
            rec = {"n_q": r.n_q, "epsilon": r.epsilon, "realization": k, "seed": seed, "status": "failed" if k in failed else "ok"}
            if k in failed:
                rec["error"] = failed[k]
            tasks.append(rec)
    return tasks


def run_entropy(cfg: ExperimentConfig) -> RunResult:
    validate(cfg)
    started = time.time()
    params = MapParams(cfg.n_q, cfg.cap_k)
    scan = entropy_scan(params, spec_template(cfg), cfg.eps_grid(), cfg.n_realizations, SeedPlan(cfg.seed), cfg.layout, cfg.jobs)
    header = ["epsilon", "mean_S", "stderr_S", "two_pow_S", "n_realizations", "n_q", "model", "S_theory", "status"]
    status = "ok" if all(r.ok for r in scan.rows) else "partial"
    meta = {
        "n_q": cfg.n_q,
        "model": cfg.model,
        "constants": {"A": cfg.a_const, "B": cfg.b_const},
        "gate_counts": _gate_counts(cfg, cfg.n_q),
        "threshold_theory": predicted_threshold(cfg.model, cfg.n_q, cfg.a_const, cfg.b_const),
    }
    return _write(cfg, _csv_text(header, _scan_rows(cfg, scan)), meta, _scan_tasks(scan), status, started)


@dataclass
class AdaptiveThreshold:
    n_q: int
    scan: EntropyScan
    eps_chi: float | None
    bracket: tuple[float, float] | None
    theory: float
    error: str | None = None


def adaptive_threshold(
    params: MapParams,
    template: ImperfectionSpec,
    n_realizations: int,
    seed_plan: SeedPlan,
    layout: str,
    start: float,
    jobs: int = 1,
    refine: int = 5,
    max_expansions: int = 12,
    level: float = 1.0,
) -> tuple[EntropyScan, float | None, tuple | None, str | None]:
    """Bracket ``S = level`` by geometric steps of 2 from ``start``, then refine.

    The refinement places ``refine`` log-spaced points strictly inside the
    bracket. Seed indices follow evaluation order, so the result is
    deterministic.
    """
    counter = 0

    def evaluate(eps_values):
        nonlocal counter
        sc = entropy_scan(params, template, eps_values, n_realizations, seed_plan, layout, jobs, eps_index_offset=counter)
        counter += len(eps_values)
        return sc

    scan = evaluate([start])
    lo = hi = None
    s0 = scan.rows[0].mean_S
    if not math.isfinite(s0):
        return scan, None, None, "initial point failed"
    eps = start
    if s0 < level:
        lo = start
        for _ in range(max_expansions):
            eps *= 2.0
            scan = scan.merged(evaluate([eps]))
            if scan.rows[-1].mean_S >= level:
                hi = eps
                break
            lo = eps
    else:
        hi = start
        for _ in range(max_expansions):
            eps /= 2.0
            scan = scan.merged(evaluate([eps]))
            if scan.rows[0].mean_S < level:
                lo = eps
                break
            hi = eps
    if lo is None or hi is None:
        return scan, None, None, "could not bracket S = 1 within the expansion budget"
    inner = list(np.geomspace(lo, hi, refine + 2)[1:-1])
    scan = scan.merged(evaluate(inner))
    try:
        th = find_threshold(scan, level)
    except NotFoundError as exc:
        return scan, None, None, str(exc)
    return scan, th.eps_chi, th.bracket, None


def run_threshold(cfg: ExperimentConfig) -> RunResult:
    validate(cfg)
    started = time.time()
    sizes = cfg.nq_list or [cfg.n_q]
    plan = SeedPlan(cfg.seed)
    template = spec_template(cfg)
    rows, tasks, details = [], [], []
    status = "ok"
    for n_q in sizes:
        params = MapParams(n_q, cfg.cap_k)
        theory = predicted_threshold(cfg.model, n_q, cfg.a_const, cfg.b_const)
        try:
            scan, eps_chi, bracket, err = adaptive_threshold(params, template, cfg.n_realizations, plan, cfg.layout, theory, cfg.jobs)
        except DiagnosticsError as exc:
            scan, eps_chi, bracket, err = EntropyScan([]), None, None, str(exc)
        if err is not None or any(not r.ok for r in scan.rows):
            status = "partial"
        tasks += _scan_tasks(scan)
        rows.append(
            {
                "n_q": n_q,
                "eps_chi": eps_chi if eps_chi is not None else "",
                "bracket_lo": bracket[0] if bracket else "",
                "bracket_hi": bracket[1] if bracket else "",
                "theory": theory,
                "status": "ok" if err is None else "failed",
            }
        )
        details.append({"n_q": n_q, "error": err, "scan": [{"epsilon": r.epsilon, "mean_S": r.mean_S, "stderr_S": r.stderr_S} for r in scan.rows]})
    meta = {
        "model": cfg.model,
        "constants": {"A": cfg.a_const, "B": cfg.b_const},
        "gate_counts": {str(n): _gate_counts(cfg, n) for n in sizes},
        "scans": details,
        "bracketing": "start at theory value, expand x2 until S=1 is bracketed, refine with 5 log-spaced points",
    }
    header = ["n_q", "eps_chi", "bracket_lo", "bracket_hi", "theory", "status"]
    return _write(cfg, _csv_text(header, rows), meta, tasks, status, started)


# -- fidelity ----------------------------------------------------------------------------


def run_fidelity(cfg: ExperimentConfig) -> RunResult:
    validate(cfg)
    started = time.time()
    params = MapParams(cfg.n_q, cfg.cap_k)
    grid = cfg.eps_grid()
    eps = grid[-1]
    spec, real, seed = _frozen_realization(cfg, cfg.n_q, eps)
    kind, _, val = cfg.init.partition(":")
    psi0 = resolve_init(params, (kind, int(val)), cfg.layout)
    f = fidelity_array(params, spec, real, psi0, cfg.t_max, cfg.layout)
    t = np.arange(cfg.t_max + 1)

    meta = {"n_q": cfg.n_q, "epsilon": eps, "init": cfg.init, "realization": real.to_dict(), "gate_counts": _gate_counts(cfg, cfg.n_q)}
    floor_pred = 1.0 / params.big_n
    if kind == "eig":
        s_mean = realization_entropy(params, spec, real, cfg.layout) if eps > 0 else 0.0
        meta["mean_entropy"] = s_mean
        floor_pred = 2.0**-s_mean
    meta["predicted_floor"] = floor_pred
    meta["plateau"] = plateau(f)
    fit_info = None
    if eps > 0:
        try:
            fit = fit_exponential(t, f, floor=floor_pred)
            fit_info = {"t_f": fit.t_f, "gamma": fit.rate, "intercept": fit.intercept, "window": list(fit.window), "n_points": fit.n_points}
        except DiagnosticsError as exc:
            fit_info = {"error": str(exc)}
    meta["fit"] = fit_info
    meta["fit_rule"] = "ln(f - floor) = c - t/t_f on t >= 3 up to the first point below 3x the predicted floor"
    short = None
    if eps > 0:
        try:
            cmp = compare_short_time(t, f)
            short = {
                "gaussian_residual": cmp.gaussian_residual,
                "exponential_residual": cmp.linear_residual,
                "window": list(cmp.window),
                "gaussian_preferred": cmp.gaussian_preferred,
            }
        except DiagnosticsError as exc:
            short = {"error": str(exc)}
    meta["short_time"] = short
    rows = ({"t": int(ti), "f": float(fi)} for ti, fi in zip(t, f))
    tasks = [{"task": "fidelity", "seed": seed, "status": "ok"}]
    return _write(cfg, _csv_text(["t", "f"], rows), meta, tasks, "ok", started)


RUNNERS = {
    "spectrum": run_spectrum,
    "husimi": run_husimi,
    "entropy": run_entropy,
    "threshold": run_threshold,
    "fidelity": run_fidelity,
}


def run(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.experiment](cfg)


def rerun_manifest(path: str | Path, out: str | None = None) -> RunResult:
    """Re-execute the config echoed in a manifest (optionally into another directory)."""
    data = json.loads(Path(path).read_text())
    cfg = ExperimentConfig.from_dict(data["config"])
    if out is not None:
        cfg.out = out
    return run(cfg)

