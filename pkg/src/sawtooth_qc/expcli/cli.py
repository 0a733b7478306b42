"""``sawtooth-qc`` command line.

Exit codes: 0 success, 2 config error, 3 partial failure, 4 resource guard.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, ResourceGuard, apply_overrides, load_config
from .runner import rerun_manifest, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_RESOURCE = 4

log = logging.getLogger("sawtooth_qc")

# flag dest -> config field
_FLAG_FIELDS = {
    "nq": "n_q",
    "nq_list": "nq_list",
    "eps_min": "eps_min",
    "eps_max": "eps_max",
    "eps_count": "eps_count",
    "eps": "eps_list",
    "spacing": "eps_spacing",
    "include_zero": "include_zero",
    "realizations": "n_realizations",
    "seed": "seed",
    "model": "model",
    "j_coupling": "j_coupling",
    "qubit": "qubit",
    "tau_g": "tau_g",
    "init": "init",
    "tmax": "t_max",
    "level": "level",
    "grid": "grid",
    "s": "s",
    "husimi_eps": "husimi_eps",
    "layout": "layout",
    "out": "out",
    "jobs": "jobs",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value config file; flags override it")
    p.add_argument("--nq", type=int, help="number of qubits")
    p.add_argument("--nq-list", help="comma-separated qubit counts (threshold)")
    p.add_argument("--eps-min", type=float)
    p.add_argument("--eps-max", type=float)
    p.add_argument("--eps-count", type=int)
    p.add_argument("--eps", help="explicit comma-separated epsilon list (overrides min/max/count)")
    p.add_argument("--spacing", choices=("log", "linear"), help="epsilon grid spacing")
    p.add_argument("--include-zero", action="store_const", const=True, help="add eps = 0 to the grid")
    p.add_argument("--realizations", type=int, help="disorder realizations per epsilon")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--model", choices=("static", "single"))
    p.add_argument("--j-coupling", type=float, help="coupling range J in units of delta")
    p.add_argument("--qubit", help="impurity qubit index, or 'random'")
    p.add_argument("--tau-g", type=float, help="inter-gate interval")
    p.add_argument("--init", help="eig:IDX or mom:N")
    p.add_argument("--tmax", type=int, help="number of kicks")
    p.add_argument("--level", type=int, help="tracked level index at eps = 0")
    p.add_argument("--grid", help="Husimi grid NTHETAxNP, e.g. 64x64")
    p.add_argument("--s", type=float, help="Husimi uncertainty ratio dp/dtheta")
    p.add_argument("--husimi-eps", help="comma-separated epsilons for Husimi snapshots")
    p.add_argument("--layout", choices=("paper", "compact"), help="phase-gate layout")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sawtooth-qc", description="Sawtooth-map quantum computer with static imperfections")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_common(sub.add_parser(name, help=f"run the {name} experiment"))
    rr = sub.add_parser("rerun", help="re-execute a manifest.json")
    rr.add_argument("manifest")
    rr.add_argument("--out", metavar="DIR", help="write into this directory instead")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=args.command)
    if args.config:
        load_config(args.config, cfg)
        cfg.experiment = args.command
    overrides = {}
    for dest, name in _FLAG_FIELDS.items():
        val = getattr(args, dest, None)
        if val is not None:
            overrides[name] = val
    return apply_overrides(cfg, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "rerun":
            result = rerun_manifest(args.manifest, args.out)
        else:
            result = run(config_from_args(args))
    except ResourceGuard as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(result.csv_path)
    if result.partial_failure:
        print("some tasks failed; see the manifest", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
