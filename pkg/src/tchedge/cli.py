"""Command-line runner: ``tchedge {simulate,hedge,risk,validate}``.

Exit codes: 0 success, 1 validation failure or runtime error, 2 config error.
Every output file is written deterministically (sorted JSON keys, ``repr``
floats, no timestamps), so identical config and seed give identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigError, ExperimentConfig
from .hedge import (
    dump_json,
    hedge_claim,
    risk_measure,
    scenario_family,
    summary,
    verify_saddle,
    write_node_csv,
)
from .market import market_to_csv
from .noise import noise_to_csv
from .regression import markov_basis
from .validation import run_suites, simulate_from_config, strip_timings

SCHEMA = {
    "paths.csv": {
        "path": "path index",
        "cell": "grid cell index i, covering [t_i, t_{i+1})",
        "t": "left endpoint t_i",
        "lambda_B": "Gaussian intensity at t_i",
        "lambda_H": "jump intensity at t_i",
        "dB": "Gaussian increment over the cell",
        "count_k": "number of jumps with mark k over the cell (marks in manifest order)",
    },
    "market.csv": {
        "path": "path index",
        "node": "grid node index",
        "t": "node time",
        "s0": "bank account",
        "s1": "stock price",
    },
    "hedge_nodes.csv": {
        "node": "grid node index",
        "t": "node time",
        "pi_mean": "mean amount held in the stock over the cell starting at this node",
        "pi_sd": "cross-path standard deviation of that amount",
        "y_hat_mean": "mean optimal price",
        "y_hat_sd": "cross-path standard deviation of the optimal price",
        "wealth_mean": "mean portfolio wealth",
        "wealth_sd": "cross-path standard deviation of the wealth",
        "cost_mean": "mean cost process (price minus wealth)",
        "cost_rms": "root mean square of the cost process",
        "residual_B_rms": "RMS mismatch of the Gaussian integrand matching equation",
        "residual_H_rms": "RMS mismatch of the jump integrand matching equation",
        "theta_B_mean": "mean worst-case Gaussian shift",
        "kappa_mean": "mean minimal-norm multiplier (0 for user-supplied scenarios)",
    },
}


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_json(obj, fh)


def _prepare(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg: ExperimentConfig, command: str, files: list) -> dict:
    g = cfg.data["grid"]
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "grid": {"horizon": float(g["horizon"]), "n_steps": int(g["n_steps"])},
        "filtration": cfg.filtration,
        "marks": list(cfg.data["jumps"]["marks"]),
        "config_sha256": cfg.digest(),
        "files": sorted(files),
    }


def _finish(cfg, out: Path, command: str, files: list, columns: dict) -> None:
    _write_json(out / "schema.json", columns)
    _write_text(out / "config.toml", cfg.to_text(include_output=False))
    _write_json(out / "manifest.json", _manifest(cfg, command, files + ["schema.json", "config.toml"]))


def run_simulate(cfg: ExperimentConfig) -> int:
    out = _prepare(Path(cfg.output))
    ens = simulate_from_config(cfg)
    limit = int(cfg.data["export"]["max_paths"])
    with open(out / "paths.csv", "w", encoding="utf-8", newline="\n") as fh:
        noise_to_csv(ens.noise, fh, limit)
    with open(out / "market.csv", "w", encoding="utf-8", newline="\n") as fh:
        market_to_csv(ens.market, fh, ens.grid.nodes, limit)
    _finish(cfg, out, "simulate", ["paths.csv", "market.csv"], {k: SCHEMA[k] for k in ("paths.csv", "market.csv")})
    print(f"wrote {min(limit, cfg.n_paths)} of {cfg.n_paths} paths to {out}")
    return 0


def _hedge(cfg: ExperimentConfig):
    ens = simulate_from_config(cfg)
    opts = cfg.scenario_options()
    basis = markov_basis(ens, cfg.filtration, **cfg.regression_options())
    result = hedge_claim(ens, cfg.claim(), cfg.filtration, basis, opts["rule"], cfg.user_theta(), opts["bound"], opts["one_sided"])
    return ens, result


def _risk_block(cfg, ens, result) -> dict:
    risk = cfg.data["risk"]
    fam = scenario_family(result.scenario, risk["scales"], risk["mark_tilts"])
    kept = [t for t in fam if t.admissibility(ens.intensity, ens.nu)["admissible"]]
    if not kept:
        raise ValueError("no admissible scenario in the risk family")
    disc = ens.discount[:, -1]
    positions = {
        "unhedged_short": -disc * result.claim,
        "hedged_wealth": disc * (result.wealth[:, -1] - result.claim),
        "hedged_spread": disc * (result.y_hat[:, -1] - result.claim),
    }
    out = {"family_size": len(kept), "dropped_inadmissible": len(fam) - len(kept), "positions": {}}
    for name, x in positions.items():
        r = risk_measure(x, kept, ens)
        out["positions"][name] = {"rho_0": float(r.value), "per_scenario": [float(v) for v in r.per_scenario], "argmax": int(r.argmax)}
    return out


def run_hedge(cfg: ExperimentConfig) -> int:
    out = _prepare(Path(cfg.output))
    ens, result = _hedge(cfg)
    sad = verify_saddle(result, ens)
    risk = _risk_block(cfg, ens, result)
    with open(out / "hedge_nodes.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_node_csv(result, ens, fh)
    summ = summary(result, ens, sad, risk["positions"]["hedged_wealth"]["rho_0"])
    _write_json(out / "summary.json", summ)
    _finish(cfg, out, "hedge", ["hedge_nodes.csv", "summary.json"], {"hedge_nodes.csv": SCHEMA["hedge_nodes.csv"]})
    print(f"v = {summ['v']:.6g}, max RMS cost after 0 = {summ['max_rms_cost_after_0']:.4g}, results in {out}")
    return 0


def run_risk(cfg: ExperimentConfig) -> int:
    out = _prepare(Path(cfg.output))
    ens, result = _hedge(cfg)
    risk = _risk_block(cfg, ens, result)
    _write_json(out / "risk.json", risk)
    _finish(cfg, out, "risk", ["risk.json"], {})
    for name, block in risk["positions"].items():
        print(f"rho_0[{name}] = {block['rho_0']:.6g}")
    return 0


def run_validate(cfg: ExperimentConfig, seeds: Optional[list] = None, suites: Optional[list] = None) -> int:
    out = _prepare(Path(cfg.output))
    runs = []
    for seed in seeds or [cfg.seed]:
        rep = run_suites(cfg.with_overrides(seed=seed), suites)
        runs.append(rep)
        failed = [k for k, v in rep["suites"].items() if not v["passed"]]
        status = "pass" if not failed else "FAIL (" + ", ".join(failed) + ")"
        print(f"seed {seed}: pass rate {rep['pass_rate']:.3f} {status}")
    report = {
        "passed": all(r["passed"] for r in runs),
        "per_seed": [{"seed": r["seed"], "passed": r["passed"], "pass_rate": r["pass_rate"]} for r in runs],
        "runs": strip_timings(runs),
    }
    _write_json(out / "validate.json", report)
    _finish(cfg, out, "validate", ["validate.json"], {})
    return 0 if report["passed"] else 1


def _seed_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tchedge", description="Worst-case hedging under time-changed noises.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "simulate intensities, noises and market paths"),
        ("hedge", "run the hedging pipeline and the saddle check"),
        ("risk", "evaluate the risk measure on hedged and unhedged positions"),
        ("validate", "run the property suites"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML config file (defaults are used for missing fields)")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--out", help="output directory (created if missing)")
        p.add_argument("--paths", type=int, help="override the number of Monte Carlo paths")
        if name == "validate":
            p.add_argument("--seeds", type=_seed_list, help="comma-separated seed sweep, e.g. 1,2,3,4,5")
            p.add_argument("--suites", help="comma-separated subset of suites")
    return ap


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if not args.config:
        cfg.validate()
    return cfg.with_overrides(seed=args.seed, n_paths=args.paths, output=args.out)


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            return run_simulate(cfg)
        if args.command == "hedge":
            return run_hedge(cfg)
        if args.command == "risk":
            return run_risk(cfg)
        suites = args.suites.split(",") if args.suites else None
        return run_validate(cfg, args.seeds, suites)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
