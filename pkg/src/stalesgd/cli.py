"""Command-line entry point: ``stalesgd {train,compare,check}``.

Exit status is 0 exactly when every enabled check passed, 1 when a check
failed and 2 on configuration or scheduling errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import rng as _rng
from .config import ConfigError, RunConfig, parse_config
from .nn import encode_targets, finite_diff_check, init_params
from .pipeline import SchedulingError
from .topology import TopologyError, build_agent_grid, build_mixing_matrix, validate_topology
from .trainer import run_comparison, run_training

FLAG_KEYS = {
    "seed": "run.seed",
    "s": "run.s",
    "k": "run.k",
    "batch": "run.batch",
    "iters": "run.iters",
    "alpha": "run.alpha",
    "schedule": "run.schedule",
    "out": "run.out",
}

GRAD_TOL = 1e-4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stalesgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("train", "run one distributed training job"),
        ("compare", "run the four-method comparison"),
        ("check", "run verification suites"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--s", type=int, help="number of data-groups")
        p.add_argument("--k", type=int, help="number of modules per data-group")
        p.add_argument("--batch", type=int, help="mini-batch size per data-group")
        p.add_argument("--iters", type=int, help="number of iterations T")
        p.add_argument("--alpha", type=float, help="gossip edge weight")
        p.add_argument("--schedule", help="e.g. strategy1, strategy2:1500,3000,4000, diminishing:0.5")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        if name == "check":
            p.add_argument("--check", choices=("topology", "grad", "bound", "all"), default="all")
    return parser


def load(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    return parse_config(args.config, overrides)


def cmd_train(cfg: RunConfig) -> int:
    result = run_training(cfg.train_config())
    cfg.out.mkdir(parents=True, exist_ok=True)
    result.write_csv(cfg.out / "metrics.csv")
    result.write_diagnostics(cfg.out / "diagnostics.txt")
    d = result.diagnostics
    print(f"final loss {d['final_loss']:.6g} (initial {d['initial_loss']:.6g}), "
          f"contraction failures {d['contraction_failures']}, bound failures {d['bound_failures']}")
    print(f"wrote {cfg.out / 'metrics.csv'} and {cfg.out / 'diagnostics.txt'}")
    return 0 if result.checks_passed else 1


def cmd_compare(cfg: RunConfig) -> int:
    results = run_comparison(cfg.train_config(), cfg.out)
    for label, res in results.items():
        d = res.diagnostics
        print(f"{label:<14} S={d['S']} K={d['K']}  loss {d['initial_loss']:.4f} -> {d['final_loss']:.4f}")
    print(f"wrote per-method CSVs, merged.csv and summary.csv to {cfg.out}")
    return 0 if all(res.checks_passed for res in results.values()) else 1


def _check_topology(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    graph = build_agent_grid(cfg.S, cfg.K, cfg.model_edges())
    report = validate_topology(graph)
    rows = list(report.checks)
    if cfg.S > 1:
        mix = build_mixing_matrix(graph.model_edges, cfg.S, cfg["run.alpha"])
        rows.append(("spectral gap < 1", mix.gamma < 1 - 1e-9, f"gamma={mix.gamma:.6g} alpha={mix.alpha:.6g}"))
    return rows


def _check_grad(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    ds = cfg.dataset()
    spec = cfg.network(ds)
    params = init_params(spec, cfg.seed)
    idx = _rng.stream(cfg.seed, _rng.EVAL).choice(ds.N, size=min(8, ds.N), replace=False)
    X, labels = ds.columns(np.sort(idx))
    err = finite_diff_check(spec, params, X, encode_targets(spec, labels))
    return [("finite-difference gradient", err < GRAD_TOL, f"max rel error {err:.3e} (tol {GRAD_TOL:g})")]


def _check_bound(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    result = run_training(cfg.train_config())
    rows = [
        (f"contraction t<={rec.t}", rec.contraction_ok, f"delta_norm={rec.delta_norm:.3e}")
        for rec in result.records[1:]
    ]
    d = result.diagnostics
    rows.append(("cumulative consensus bound", d["bound_failures"] == 0, f"{d['bound_failures']} violation(s)"))
    return rows


def cmd_check(cfg: RunConfig, which: str = "all") -> int:
    suites = {"topology": _check_topology, "grad": _check_grad, "bound": _check_bound}
    names = list(suites) if which == "all" else [which]
    rows = []
    for name in names:
        rows.extend((f"[{name}] {label}", ok, detail) for label, ok, detail in suites[name](cfg))
    width = max(len(label) for label, _, _ in rows)
    for label, ok, detail in rows:
        print(f"{label:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_check(cfg, args.check)
    except (ConfigError, TopologyError, SchedulingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
