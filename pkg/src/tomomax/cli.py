"""Command-line interface.

Subcommands: compute-lfp, estimator-grid, risk-profile, bounds-table,
compare and noisy-coin.  Options may also come from a JSON config file
(``--config``); precedence is command-line flag > config file > default.
Exit codes: 0 success, 2 configuration error, 3 solver did not converge
(artifacts are still written and flagged).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import noisycoin
from .errors import NonConvergenceWarning, TomomaxError
from .estimators import TabulatedEstimator, builtin_table
from .experiment import ExperimentDesign
from .figures import estimator_grid, grid_svg, profile_svg, spacing_variance
from .lfp import LfpResult, kempthorne_lfp, mc_lfp
from .qstate import StateKind
from .risk import RiskEvaluator, SearchConfig, max_risk

log = logging.getLogger("tomomax")

EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3


class ConfigError(Exception):
    pass


DEFAULTS = {
    "compute-lfp": {"kind": "rebit", "N": None, "alpha": 0.0, "alg": "mc", "seed": None, "tol": 1e-3,
                    "weight_tol": 1e-4, "m_per_point": 5, "sigma": None, "n_init": 100, "mixing_alpha": None,
                    "max_iter": None, "weight_rtol": None, "grid_scale": 1.0, "out": "lfp_out"},
    "estimator-grid": {"estimator": "li", "table": None, "M": 8, "beta": 0.04, "out": "grid.svg"},
    "risk-profile": {"N": None, "estimators": ["hml"], "tables": [], "betas": [0.04], "angle": 45.0,
                     "points": 200, "out": "profile.csv", "svg": None},
    "bounds-table": {"N_list": [16, 32, 64, 128, 192, 256, 512, 1000], "beta_bar": 4.0, "out": "bounds.csv"},
    "compare": {"kind": "rebit", "N_list": [128], "betas": [0.01, 0.04, 0.10], "mle": False, "tables": [],
                "grid_scale": 1.0, "out": "compare.csv"},
    "noisy-coin": {"N": None, "alpha": 0.5 * (1 - 2 ** -0.5), "p1": None, "lfp": False, "seed": None,
                   "tol": 1e-3, "out": "noisy_coin.json"},
}


# ---------------------------------------------------------------------------
# plumbing


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_threads() -> int:
    env = os.environ.get("TOMOMAX_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"TOMOMAX_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("TOMOMAX_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults for the chosen subcommand."""
    defaults = DEFAULTS[args.command]
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(defaults) - {"threads"}
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    cfg = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else file_cfg.get(key, default)
    threads = args.threads if args.threads is not None else file_cfg.get("threads")
    cfg["threads"] = int(threads) if threads is not None else default_threads()
    if cfg["threads"] < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def _kind(name: str) -> StateKind:
    try:
        return StateKind(name)
    except ValueError:
        raise ConfigError(f"unknown kind {name!r}") from None


def _design(kind: StateKind, n_total, alpha: float = 0.0) -> ExperimentDesign:
    if n_total is None:
        raise ConfigError("--N is required")
    n_total = int(n_total)
    if kind is StateKind.COIN:
        if n_total < 1:
            raise ConfigError("N must be positive")
        if not 0 <= alpha < 0.5:
            raise ConfigError("alpha must lie in [0, 1/2)")
        return noisycoin.NoisyCoinModel.uniform(n_total, alpha).design()
    try:
        return ExperimentDesign.from_total(kind, n_total)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _search(cfg) -> SearchConfig:
    return SearchConfig(threads=cfg["threads"]).scaled(float(cfg.get("grid_scale", 1.0)))


def _load_table(path) -> TabulatedEstimator:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read estimator table {path}: {exc}") from None
    if "estimator" in d:  # an LfpResult file
        d = d["estimator"]
    try:
        return TabulatedEstimator.from_dict(d)
    except (KeyError, ValueError, TomomaxError) as exc:
        raise ConfigError(f"{path} is not an estimator table: {exc}") from None


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def cmd_compute_lfp(cfg) -> int:
    kind = _kind(cfg["kind"])
    design = _design(kind, cfg["N"], float(cfg["alpha"]))
    search = _search(cfg)
    optional = {k: cfg[k] for k in ("max_iter", "weight_rtol") if cfg[k] is not None}
    if cfg["alg"] == "mc":
        if cfg["seed"] is None:
            raise ConfigError("--seed is required for the Monte Carlo algorithm")
        # one-dimensional runs start from a grid; see noisycoin.coin_lfp
        init = noisycoin.chebyshev_prior(COIN_GRID) if kind is StateKind.COIN else None
        try:
            result = mc_lfp(design, n_init=int(cfg["n_init"]), tol=float(cfg["tol"]),
                            weight_tol=float(cfg["weight_tol"]), m_per_point=int(cfg["m_per_point"]),
                            sigma=cfg["sigma"], seed=int(cfg["seed"]), search=search, init_prior=init, **optional)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif cfg["alg"] == "kempthorne":
        try:
            result = kempthorne_lfp(design, tol=float(cfg["tol"]), mixing_alpha=cfg["mixing_alpha"],
                                    search=search, **optional)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(f"unknown algorithm {cfg['alg']!r}")
    out = Path(cfg["out"])
    write_atomic(out / "lfp.json", result.to_json())
    write_atomic(out / "estimator.json", result.estimator.to_json())
    write_atomic(out / "estimator.csv", result.estimator.to_csv())
    write_atomic(out / "prior.csv", _csv(["weight"] + [f"r{i}" for i in range(design.kind.dim)],
                                         [(w, *s.r) for s, w in zip(result.prior.supports, result.prior.weights)]))
    summary = summarize(result)
    write_atomic(out / "summary.txt", summary)
    print(summary, end="")
    return 0 if result.converged else EXIT_NONCONVERGED


def summarize(result: LfpResult) -> str:
    design = result.estimator.design
    lines = [
        f"algorithm    {result.algorithm}",
        f"design       {design.kind.value} N={design.N}",
        f"av_risk      {result.av_risk!r}",
        f"max_risk     {result.max_risk!r}",
        f"gap          {result.gap!r}",
        f"supports     {len(result.prior)}",
        f"iterations   {result.iterations}",
        f"converged    {'yes' if result.converged else 'NO'}",
    ]
    return "\n".join(lines) + "\n"


def cmd_estimator_grid(cfg) -> int:
    if cfg["table"]:
        est = _load_table(cfg["table"])
        title = Path(cfg["table"]).stem
    else:
        design = ExperimentDesign.pauli(StateKind.REBIT, int(cfg["M"]))
        try:
            est = builtin_table(cfg["estimator"], design, float(cfg["beta"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        title = f"{cfg['estimator']} M={cfg['M']}"
    if est.design.kind is not StateKind.REBIT:
        raise ConfigError("estimator grids are drawn for rebit designs only")
    try:
        grid = estimator_grid(est)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg["out"])
    write_atomic(out, grid_svg(est, title))
    write_atomic(out.with_suffix(".csv"), est.to_csv())
    radii = np.linalg.norm(grid, axis=2)
    rmax = float(radii.max())
    print(f"max |r| = {rmax!r}  min margin = {1 - rmax!r}  "
          f"boundary spacing variance = {spacing_variance(grid)!r}")
    return 0


def cmd_risk_profile(cfg) -> int:
    tables = {}
    for path in cfg["tables"]:
        tables[Path(path).stem] = _load_table(path)
    designs = {t.design for t in tables.values()}
    if len(designs) > 1:
        raise ConfigError("estimator tables come from different designs")
    if cfg["N"] is not None:
        design = _design(StateKind.REBIT, cfg["N"])
        if designs and design not in designs:
            raise ConfigError("--N does not match the design of the given tables")
    elif designs:
        design = designs.pop()
    else:
        raise ConfigError("give --N or at least one --table")
    for name in cfg["estimators"]:
        if name == "hml":
            for beta in cfg["betas"]:
                tables[f"hml_{beta}"] = builtin_table("hml", design, float(beta))
        else:
            try:
                tables[name] = builtin_table(name, design)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    theta = math.radians(float(cfg["angle"]))
    axis = np.array([math.cos(theta), math.sin(theta), 0.0][: design.kind.dim])
    if design.kind is StateKind.COIN:
        axis = np.array([1.0])
    t = np.linspace(0, 1, int(cfg["points"]))
    curves = {}
    for name, est in tables.items():
        if not est.is_physical:
            curves[name] = np.full(len(t), math.inf)
            continue
        curves[name] = RiskEvaluator(est, cfg["threads"]).risk(t[:, None] * axis[None, :])
    rows = [(float(ti), *[float(c[i]) for c in curves.values()]) for i, ti in enumerate(t)]
    write_atomic(cfg["out"], _csv(["radius"] + [f"risk_nats_{name}" for name in curves], rows))
    if cfg["svg"]:
        write_atomic(cfg["svg"], profile_svg(t, curves, f"risk along {cfg['angle']} degrees, N={design.N}"))
    print(f"wrote {len(rows)} rows x {len(curves)} estimators to {cfg['out']}")
    return 0


def cmd_bounds_table(cfg) -> int:
    n_values = [int(n) for n in cfg["N_list"]]
    if any(n < 2 for n in n_values):
        raise ConfigError("bounds need N >= 2")
    text = noisycoin.bounds_csv(n_values, float(cfg["beta_bar"]))
    write_atomic(cfg["out"], text)
    print(text, end="")
    return 0


def cmd_compare(cfg) -> int:
    kind = _kind(cfg["kind"])
    search = _search(cfg)
    extra = [_load_table(p) for p in cfg["tables"]]
    rows = []
    for n in cfg["N_list"]:
        design = _design(kind, n)
        entries = [(f"table:{Path(p).stem}", t) for p, t in zip(cfg["tables"], extra) if t.design == design]
        entries += [(f"hml_{b}", builtin_table("hml", design, float(b))) for b in cfg["betas"]]
        if cfg["mle"]:
            entries.append(("mle", builtin_table("mle", design)))
        values = {}
        for name, est in entries:
            values[name] = max_risk(est, search)[0] if est.is_physical else math.inf
        hml = {k: v for k, v in values.items() if k.startswith("hml_")}
        best = min(hml, key=hml.get) if hml else ""
        for name, v in values.items():
            rows.append((int(n), name, v, "best_hml" if name == best else ""))
    text = _csv(["N", "estimator", "max_risk", "flag"], rows)
    write_atomic(cfg["out"], text)
    print(text, end="")
    return 0


def cmd_noisy_coin(cfg) -> int:
    if cfg["N"] is None:
        raise ConfigError("--N is required")
    n, alpha = int(cfg["N"]), float(cfg["alpha"])
    try:
        model = noisycoin.NoisyCoinModel.uniform(n, alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    beta_bar = model.mean_resolution()
    report = {"N": n, "alpha": alpha, "beta_bar": beta_bar, "classical_reference": noisycoin.classical_coin_reference(n)}
    if math.isfinite(beta_bar):
        p1 = float(cfg["p1"]) if cfg["p1"] is not None else noisycoin.default_p1(n, beta_bar)
        report["bound"] = noisycoin.bound_noisy_coin(n, beta_bar)
        report["p1"] = p1
        report["bimodal_risk_at_p0"] = noisycoin.bimodal_risk_at_p0(model, p1)
    code = 0
    if cfg["lfp"]:
        if cfg["seed"] is None:
            raise ConfigError("--seed is required with --lfp")
        result = noisycoin.coin_lfp(model, grid_points=COIN_GRID, seed=int(cfg["seed"]), tol=float(cfg["tol"]),
                                    search=SearchConfig(threads=cfg["threads"]))
        report.update(av_risk=result.av_risk, max_risk=result.max_risk, gap=result.gap, converged=result.converged)
        code = 0 if result.converged else EXIT_NONCONVERGED
    text = json.dumps(report, indent=2) + "\n"
    write_atomic(cfg["out"], text)
    print(text, end="")
    return code


COIN_GRID = 301

COMMANDS = {
    "compute-lfp": cmd_compute_lfp,
    "estimator-grid": cmd_estimator_grid,
    "risk-profile": cmd_risk_profile,
    "bounds-table": cmd_bounds_table,
    "compare": cmd_compare,
    "noisy-coin": cmd_noisy_coin,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values (flags override it)")
    common.add_argument("--threads", type=int, help="worker threads (default: $TOMOMAX_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = argparse.ArgumentParser(prog="tomomax", description="Minimax tomography of two-level systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-lfp", parents=[common], help="least favorable prior and minimax estimator")
    p.add_argument("--kind", choices=[k.value for k in StateKind])
    p.add_argument("--N", type=int, help="total number of measurements")
    p.add_argument("--alpha", type=float, help="per-trial error probability (coin kind only)")
    p.add_argument("--alg", choices=["mc", "kempthorne"])
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="relative certificate gap at which to stop")
    p.add_argument("--weight-tol", dest="weight_tol", type=float, help="prune threshold (mc)")
    p.add_argument("--m-per-point", dest="m_per_point", type=int, help="children per survivor (mc)")
    p.add_argument("--sigma", type=float, help="child spread (mc; default 0.5/sqrt(N))")
    p.add_argument("--n-init", dest="n_init", type=int, help="initial random supports (mc)")
    p.add_argument("--mixing-alpha", dest="mixing_alpha", type=float, help="weight of each new support (kempthorne)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--weight-rtol", dest="weight_rtol", type=float, help="weight-solver relative tolerance")
    p.add_argument("--grid-scale", dest="grid_scale", type=float, help="multiply max-risk search grid densities")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("estimator-grid", parents=[common], help="SVG of a rebit estimator's grid of estimates")
    p.add_argument("--estimator", choices=["li", "mle", "hml"])
    p.add_argument("--table", help="estimator table or LFP result JSON (overrides --estimator)")
    p.add_argument("--M", type=int, help="shots per basis for built-in estimators")
    p.add_argument("--beta", type=float, help="hedging parameter for hml")
    p.add_argument("--out", help="SVG path; the CSV goes next to it")

    p = sub.add_parser("risk-profile", parents=[common], help="risk along a radial axis")
    p.add_argument("--N", type=int)
    p.add_argument("--estimators", nargs="*", choices=["li", "mle", "hml"])
    p.add_argument("--table", dest="tables", action="append", help="estimator table JSON (repeatable)")
    p.add_argument("--betas", nargs="+", type=float)
    p.add_argument("--angle", type=float, help="axis angle in degrees from x")
    p.add_argument("--points", type=int)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--svg", help="optional SVG overlay path")

    p = sub.add_parser("bounds-table", parents=[common], help="analytic lower bounds as CSV")
    p.add_argument("--N", dest="N_list", nargs="+", type=int)
    p.add_argument("--beta-bar", dest="beta_bar", type=float)
    p.add_argument("--out")

    p = sub.add_parser("compare", parents=[common], help="max risk of several estimators")
    p.add_argument("--kind", choices=["rebit", "qubit"])
    p.add_argument("--N", dest="N_list", nargs="+", type=int)
    p.add_argument("--betas", nargs="+", type=float)
    p.add_argument("--mle", action="store_true", default=None)
    p.add_argument("--table", dest="tables", action="append", help="extra table, e.g. a minimax estimator")
    p.add_argument("--grid-scale", dest="grid_scale", type=float)
    p.add_argument("--out")

    p = sub.add_parser("noisy-coin", parents=[common], help="noisy-coin bounds, bimodal risk and optional LFP")
    p.add_argument("--N", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p1", type=float, help="second bimodal support (default 1/sqrt(beta_bar N))")
    p.add_argument("--lfp", action="store_true", default=None, help="also run the Monte Carlo LFP")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"tomomax: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TomomaxError as exc:
        print(f"tomomax: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
