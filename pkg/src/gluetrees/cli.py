"""Command-line experiment runner: ``gluetrees {simulate,verify,limits}``.

Every command needs a seed (from ``--seed`` or the config file).  Outputs go
to ``--out``: CSV for grid data, JSON for reports.  Wall-clock timings are kept
in separate ``*_timings.json`` files so the reports themselves are
byte-reproducible.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from . import limit_laws as ll
from .exact_laws import mean_dn_exact
from .glue_tree import GluedTree
from .mc_stats import KS_TOL, TV_TOL, Z_TOL, collect_replicas
from .rng import GENERATOR_NAME, check_seed, make_rng
from .sequences import LengthSequence, SequenceError
from .suites import SUITES, SuiteContext, run_suites

SCHEMA_VERSION = 1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SIMULATE_TREE_COLUMNS = ("replica", "n", "height", "height_stat", "depth")
SIMULATE_SUMMARY_COLUMNS = ("n", "a_n", "replicas", "height_mean", "height_se", "height_stat_mean",
                            "depth_mean", "depth_se", "depth_over_log_n", "mean_exact", "z")
PHI_COLUMNS = ("alpha", "lambda", "phi")
XI_COLUMNS = ("alpha", "index", "xi")
LEAF_COLUMNS = ("alpha", "p", "moment")
REGIME_COLUMNS = ("sequence", "regime", "alpha", "limit")

_DEFAULT_GRID = [1000, 10_000, 100_000, 1_000_000]
_DEFAULT_LAMBDAS = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]
_DEFAULT_REGIMES = [{"kind": "power", "alpha": 1.0}, {"kind": "constant", "c": 1.0},
                    {"kind": "logpower", "gamma": -2.0}]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    sequence: Dict[str, Any] = field(default_factory=lambda: {"kind": "power", "alpha": 1.0})
    n_grid: List[int] = field(default_factory=lambda: list(_DEFAULT_GRID))
    replicas: Optional[int] = None
    workers: int = 1
    out: str = "out"
    suites: List[str] = field(default_factory=lambda: list(SUITES))
    alphas: List[float] = field(default_factory=lambda: [1.0])
    lambdas: List[float] = field(default_factory=lambda: list(_DEFAULT_LAMBDAS))
    moments: List[float] = field(default_factory=lambda: [1.0, 2.0])
    regimes: List[Dict[str, Any]] = field(default_factory=lambda: [dict(r) for r in _DEFAULT_REGIMES])
    horizon: Optional[int] = None

    def default_replicas(self) -> int:
        return {"simulate": 100, "verify": 100_000, "limits": 100_000}[self.command]

    def recorded(self) -> dict:
        """The fields that determine results (workers and paths excluded)."""
        d = asdict(self)
        d.pop("workers")
        d.pop("out")
        return d


_KEYS = {f for f in ExperimentConfig.__dataclass_fields__ if f != "command"} | {"n"}


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key) if text else None
    return f"line {line}: " if line else ""


def load_config(command: str, path: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    raw: Dict[str, Any] = {}
    text = ""
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"{_where(text, unknown[0])}unknown config key(s): {', '.join(unknown)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "n" in raw:
        raw["n_grid"] = [raw.pop("n")]
    if "seed" not in raw:
        raise ConfigError("a seed is required (--seed or \"seed\" in the config)")

    def bad(key, msg):
        return ConfigError(f"{_where(text, key)}{key}: {msg}")

    try:
        seed = check_seed(raw.pop("seed"))
    except ValueError as exc:
        raise bad("seed", str(exc)) from None
    cfg = ExperimentConfig(command=command, seed=seed, **raw)
    try:
        seq = LengthSequence.from_config(cfg.sequence)
    except (SequenceError, TypeError, KeyError) as exc:
        raise bad("sequence", str(exc)) from None
    if not cfg.n_grid or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in cfg.n_grid):
        raise bad("n_grid", "must be a nonempty list of integers >= 1")
    if seq.max_index is not None and max(cfg.n_grid) > seq.max_index:
        raise bad("n_grid", f"exceeds the custom table length {seq.max_index}")
    cfg.n_grid = sorted(set(cfg.n_grid))
    if cfg.replicas is None:
        cfg.replicas = cfg.default_replicas()
    if isinstance(cfg.replicas, bool) or not isinstance(cfg.replicas, int) or cfg.replicas < 1:
        raise bad("replicas", "must be an integer >= 1")
    if isinstance(cfg.workers, bool) or not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise bad("workers", "must be an integer >= 1")
    unknown_suites = [s for s in cfg.suites if s not in SUITES]
    if unknown_suites:
        raise bad("suites", f"unknown suite(s) {unknown_suites}; known: {sorted(SUITES)}")
    for key in ("alphas", "lambdas", "moments"):
        vals = getattr(cfg, key)
        if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise bad(key, "must be a list of finite numbers")
    if any(a <= 0 for a in cfg.alphas):
        raise bad("alphas", "alpha must be > 0")
    if any(p < 0 for p in cfg.moments):
        raise bad("moments", "p must be >= 0")
    for spec in cfg.regimes:
        try:
            LengthSequence.from_config(spec)
        except (SequenceError, TypeError, KeyError) as exc:
            raise bad("regimes", str(exc)) from None
    return cfg


# -- output helpers ----------------------------------------------------------


def _plain(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _header(cfg: ExperimentConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "package_version": __version__, "command": cfg.command,
            "generator": GENERATOR_NAME, "config": cfg.recorded()}


# -- commands ------------------------------------------------------------------


def _tree_rows(seq, grid, rng, size):
    """Per tree: heights H_n and one uniform depth for each n in the grid."""
    out = np.empty((2, len(grid), size))
    for j in range(size):
        tree = GluedTree.build(seq, grid[-1], rng)
        h = tree.heights_along_growth()
        for g, n in enumerate(grid):
            out[0, g, j] = h[n]
            out[1, g, j] = tree.sample_uniform_points(rng, 1, upto=n)[2][0]
    return out


def height_stat(h: float, a_n: float, n: int) -> float:
    """H_n ln ln n / (a_n ln n); undefined while ln ln n <= 0."""
    lln = math.log(math.log(n)) if n > 1 else -math.inf
    return h * lln / (a_n * math.log(n)) if lln > 0 else math.nan


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    seq = LengthSequence.from_config(cfg.sequence)
    grid = cfg.n_grid
    t0 = time.perf_counter()
    data = collect_replicas(lambda rng, size: _tree_rows(seq, grid, rng, size), cfg.replicas, cfg.seed,
                            cfg.workers, 1, (0,))
    a = seq.values(grid[-1])
    tree_rows, summary = [], []
    for g, n in enumerate(grid):
        H, D = data[0, g], data[1, g]
        stat = [height_stat(h, a[n], n) for h in H]
        tree_rows.extend((r, n, H[r], stat[r], D[r]) for r in range(cfg.replicas))
        N = cfg.replicas
        hse = float(H.std(ddof=1)) / math.sqrt(N) if N > 1 else math.nan
        dse = float(D.std(ddof=1)) / math.sqrt(N) if N > 1 else math.nan
        exact = mean_dn_exact(seq, n)
        z = abs(float(D.mean()) - exact) / dse if N > 1 and dse > 0 else math.nan
        summary.append((n, float(a[n]), N, float(H.mean()), hse, float(np.mean(stat)), float(D.mean()), dse,
                        float(D.mean()) / math.log(n) if n > 1 else math.nan, exact, z))
    write_csv(out / "simulate_trees.csv", SIMULATE_TREE_COLUMNS, tree_rows)
    write_csv(out / "simulate_summary.csv", SIMULATE_SUMMARY_COLUMNS, summary)
    write_json(out / "simulate.json", {**_header(cfg), "files": ["simulate_trees.csv", "simulate_summary.csv"]})
    write_json(out / "simulate_timings.json", {"seconds": time.perf_counter() - t0, "workers": cfg.workers})
    for row in summary:
        print(f"n={row[0]}: H={row[3]:.6g} stat={row[5]:.4f} D={row[6]:.6g} exact={row[9]:.6g}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    ctx = SuiteContext(seed=cfg.seed, workers=cfg.workers, replicas=cfg.replicas)
    t0 = time.perf_counter()
    reports = run_suites(cfg.suites, ctx)
    failed = [r for r in reports if r.passed is False]
    doc = {
        **_header(cfg),
        "tolerances": {"ks": KS_TOL, "tv": TV_TOL, "z": Z_TOL},
        "passed": not failed,
        "n_checks": sum(r.passed is not None for r in reports),
        "n_failed": len(failed),
        "reports": [r.to_dict() for r in reports],
    }
    write_json(out / "verify_report.json", doc)
    write_json(out / "verify_timings.json", {"seconds": time.perf_counter() - t0, "workers": cfg.workers,
                                             "checks": {r.name: r.runtime for r in reports}})
    for r in reports:
        print(r.line())
    print(f"{len(failed)} of {doc['n_checks']} checks failed" if failed else f"all {doc['n_checks']} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_limits(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    phi_rows = [(a, lam, ll.phi_alpha(a, lam)) for a in cfg.alphas for lam in cfg.lambdas]
    xi_rows, xi_summary, leaf_rows = [], [], []
    for a in cfg.alphas:
        model = ll.LimitModel(a)
        xi = collect_replicas(lambda rng, size: ll.xi_sampler(model, rng, size), cfg.replicas, cfg.seed,
                              cfg.workers, 8192, (1, int(round(a * 1e6))))
        xi_rows.extend((a, i, x) for i, x in enumerate(xi))
        xi_summary.append({"alpha": a, "samples": cfg.replicas, "mean": float(xi.mean()),
                           "se": float(xi.std(ddof=1)) / math.sqrt(xi.size) if xi.size > 1 else None,
                           "exact_mean": model.mean(), "truncation_eps": model.eps})
        for p in cfg.moments:
            rng = None if float(p).is_integer() else make_rng(cfg.seed, 2, int(round(a * 1e6)), int(round(p * 1e6)))
            leaf_rows.append((a, p, ll.uniform_leaf_moment(a, p, rng)))
    regime_rows = []
    for spec in cfg.regimes:
        seq = LengthSequence.from_config(spec)
        r = ll.classify_regime(seq, cfg.horizon)
        regime_rows.append((seq.label, r.kind, r.alpha, r.limit))
    write_csv(out / "phi.csv", PHI_COLUMNS, phi_rows)
    write_csv(out / "xi_samples.csv", XI_COLUMNS, xi_rows)
    write_csv(out / "uniform_leaf.csv", LEAF_COLUMNS, leaf_rows)
    write_csv(out / "regimes.csv", REGIME_COLUMNS, regime_rows)
    write_json(out / "limits.json", {**_header(cfg), "xi": xi_summary,
                                     "files": ["phi.csv", "xi_samples.csv", "uniform_leaf.csv", "regimes.csv"]})
    write_json(out / "limits_timings.json", {"seconds": time.perf_counter() - t0, "workers": cfg.workers})
    for row in regime_rows:
        print(f"{row[0]}: {row[1]} ({row[3]})")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "limits": cmd_limits}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gluetrees", description="Random trees built by gluing segments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"simulate": "grow trees over an n-grid and write height/depth tables",
             "verify": "run the cross-check suites and write a JSON report",
             "limits": "tabulate limit-law quantities"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (required here or in the config)")
        p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--n", type=int, help="single tree size, replaces the n-grid")
        p.add_argument("--replicas", type=int, help="number of replicas N")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "workers": args.workers, "out": args.out, "n": args.n,
                 "replicas": args.replicas}
    try:
        cfg = load_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
