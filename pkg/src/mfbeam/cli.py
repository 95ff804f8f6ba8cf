"""Command-line front end: solve, poa and simulate pipelines.

Configuration is an INI file with sections [problem], [solver], [simulate]
and optionally [link]; every value is JSON (matrices as arrays of row
arrays, numbers as numbers, bare words for enum-ish strings). Outputs are
CSV files with a header row and 17-significant-digit floats so downstream
plotting is lossless, JSON reports embedding the fully resolved
configuration, and PNG quick-look figures (suppressed by --no-plots).

Exit codes: 0 success, 2 configuration or validation failure, 3 numerical
failure; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .costs import (conjugate_weights_by_output, mfc_payoff, mfg_payoff,
                    payoff_report)
from .errors import (AsymmetricWeight, BadGrid, BlowUp, DimensionMismatch,
                     GridMismatch, InsufficientAgents, MfbeamError,
                     NoConvergence, NonPositiveDenominator, NotPositiveDefinite,
                     SingularSystem)
from .fbsolver import SolveMethod, Variant, solve_mean_field
from .model import MfProblem, OpticalLink, TimeGrid, trajectory_l2_norm, validate_problem
from .simulator import (empirical_mean, mean_consistency_error,
                        simulate_ensemble, tracking_timeseries)

ENV_OUT_DIR = "MFBEAM_OUT"
FLOAT_FMT = "%.17g"


class ConfigError(MfbeamError):
    """Configuration file is missing, unparsable, or carries bad values."""


CONFIG_ERRORS = (ConfigError, DimensionMismatch, NotPositiveDefinite,
                 AsymmetricWeight, BadGrid, InsufficientAgents)
NUMERICAL_ERRORS = (BlowUp, SingularSystem, NoConvergence,
                    NonPositiveDenominator, GridMismatch)


@dataclass
class RunConfig:
    """Fully resolved run options (config file plus command-line overrides)."""

    problem: MfProblem
    link: OpticalLink
    variant: str = "both"        # mfg | mfc | both
    method: str = "both"         # fixed-point | newton | both
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 500
    n_agents: int = 1000
    seed: int = 0
    repetitions: int = 1
    out_dir: Path = Path("mfbeam_out")
    render_plots: bool = True
    raw: dict = None

    def validate(self) -> "RunConfig":
        if self.variant not in ("mfg", "mfc", "both"):
            raise ConfigError(f"variant must be mfg, mfc or both, got {self.variant!r}")
        if self.method not in ("fixed-point", "newton", "both"):
            raise ConfigError(f"method must be fixed-point, newton or both, got {self.method!r}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.n_agents < 2:
            raise InsufficientAgents(f"N must be at least 2, got {self.n_agents}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        return self

    def variants(self):
        return [Variant.MFG, Variant.MFC] if self.variant == "both" \
            else [Variant(self.variant)]

    def methods(self):
        return [SolveMethod.FIXED_POINT, SolveMethod.NEWTON] if self.method == "both" \
            else [SolveMethod(self.method)]

    def suffix(self, variant: Optional[Variant], method: Optional[SolveMethod]) -> str:
        parts = []
        if variant is not None and self.variant == "both":
            parts.append(variant.value)
        if method is not None and self.method == "both":
            parts.append(method.value.replace("-", "_"))
        return "".join("_" + s for s in parts)


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def load_config(path) -> dict:
    """Read the INI/JSON config into a dict of section dicts."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"problem file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return {section: {key: _parse_value(val) for key, val in parser[section].items()}
            for section in parser.sections()}


_PROBLEM_REQUIRED = ("a", "b", "q", "qbar", "r", "q_t", "qbar_t", "x0_mean",
                     "horizon", "subintervals")


def build_problem(section: dict) -> MfProblem:
    """Materialize and validate the MfProblem from the [problem] section."""
    missing = [k for k in _PROBLEM_REQUIRED if k not in section]
    if missing:
        raise ConfigError(f"[problem] is missing keys: {', '.join(missing)}")
    A = np.asarray(section["a"], dtype=float)
    n = A.shape[0]
    eye = np.eye(n)

    def get(key, default):
        return np.asarray(section[key], dtype=float) if key in section else default

    if "d" in section:
        D = np.asarray(section["d"], dtype=float)
        rho = None
    elif "rho" in section:
        rho = np.asarray(section["rho"], dtype=float)
        D = np.linalg.cholesky(2.0 * rho).T  # D'D = 2 rho
    else:
        D, rho = np.zeros((n, n)), None
    if "c" in section:
        C = np.atleast_2d(np.asarray(section["c"], dtype=float))
    else:
        raise ConfigError("[problem] needs an output map 'c'")
    grid = TimeGrid(horizon=float(section["horizon"]),
                    subintervals=int(section["subintervals"]))
    p = MfProblem(A=A, B=np.asarray(section["b"], dtype=float),
                  Gamma=get("gamma", np.zeros((n, n))), C=C, D=D,
                  Q=get("q", None), Qbar=get("qbar", None),
                  R=np.asarray(section["r"], dtype=float),
                  S=get("s", eye.copy()),
                  Q_T=get("q_t", None), Qbar_T=get("qbar_t", None),
                  S_T=get("s_t", eye.copy()),
                  x0_mean=np.asarray(section["x0_mean"], dtype=float),
                  sigma0=get("sigma0", np.zeros((n, n))),
                  grid=grid, rho=rho)
    return validate_problem(p)


def build_link(section: dict) -> OpticalLink:
    return OpticalLink(divergence=float(section.get("divergence", 1.0)),
                       focal_length=float(section.get("focal_length", 1.0)),
                       power=float(section.get("power", 1.0)),
                       spot_sigma=float(section.get("spot_sigma", 1.0)))


def resolve_config(args) -> RunConfig:
    raw = load_config(args.config)
    if "problem" not in raw:
        raise ConfigError(f"config {args.config} has no [problem] section")
    problem = build_problem(raw["problem"])
    link = build_link(raw.get("link", {}))
    solver = raw.get("solver", {})
    simulate = raw.get("simulate", {})
    out_dir = (args.out or os.environ.get(ENV_OUT_DIR) or "mfbeam_out")
    cfg = RunConfig(
        problem=problem, link=link,
        variant=(args.variant or solver.get("variant", "both")),
        method=(args.method or solver.get("method", "both")),
        damping=float(solver.get("damping", 0.5)),
        tol=float(solver.get("tol", 1e-8)),
        max_iter=int(solver.get("max_iter", 500)),
        n_agents=int(simulate.get("n", 1000)),
        seed=int(args.seed if args.seed is not None else simulate.get("seed", 0)),
        repetitions=int(simulate.get("repetitions", 1)),
        out_dir=Path(out_dir),
        render_plots=not args.no_plots,
        raw=raw,
    )
    return cfg.validate()


def resolved_config_dict(cfg: RunConfig) -> dict:
    """Every option with defaults filled, embedded in reports for reproducibility."""
    p = cfg.problem
    return {
        "problem": {
            "A": p.A.tolist(), "B": p.B.tolist(), "Gamma": p.Gamma.tolist(),
            "C": p.C.tolist(), "D": p.D.tolist(), "rho": p.rho.tolist(),
            "Q": p.Q.tolist(), "Qbar": p.Qbar.tolist(), "R": p.R.tolist(),
            "S": p.S.tolist(), "Q_T": p.Q_T.tolist(), "Qbar_T": p.Qbar_T.tolist(),
            "S_T": p.S_T.tolist(), "x0_mean": p.x0_mean.tolist(),
            "sigma0": p.sigma0.tolist(), "horizon": p.grid.horizon,
            "subintervals": p.grid.subintervals,
        },
        "solver": {"variant": cfg.variant, "method": cfg.method,
                   "damping": cfg.damping, "tol": cfg.tol, "max_iter": cfg.max_iter},
        "simulate": {"n": cfg.n_agents, "seed": cfg.seed,
                     "repetitions": cfg.repetitions},
        "link": {"divergence": cfg.link.divergence,
                 "focal_length": cfg.link.focal_length,
                 "power": cfg.link.power, "spot_sigma": cfg.link.spot_sigma},
    }


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_csv(path: Path, header, rows) -> None:
    """Delimited output: header row, then 17-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % float(x) if not isinstance(x, (int, np.integer))
                              else str(int(x)) for x in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solve(cfg: RunConfig, variant: Variant, method: SolveMethod):
    return solve_mean_field(cfg.problem, variant, method=method,
                            damping=cfg.damping, tol=cfg.tol,
                            max_iter=cfg.max_iter)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    """Solve the requested variant/method combinations; emit trajectory files."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    p = cfg.problem
    t = p.grid.points()
    for variant in cfg.variants():
        for method in cfg.methods():
            sol = _solve(cfg, variant, method)
            sfx = cfg.suffix(variant, method)
            n = p.n
            phi_header = ["t"] + [f"phi_{i + 1}_{j + 1}" for i in range(n) for j in range(n)]
            write_csv(cfg.out_dir / f"phi{sfx}.csv", phi_header,
                      ([tv] + list(sol.riccati.phi[v].ravel()) for v, tv in enumerate(t)))
            ec_header = (["t"] + [f"eta_{i + 1}" for i in range(n)]
                         + [f"chi_{i + 1}" for i in range(n)])
            write_csv(cfg.out_dir / f"eta_chi{sfx}.csv", ec_header,
                      ([tv] + list(sol.pair.eta[v]) + list(sol.pair.chi[v])
                       for v, tv in enumerate(t)))
            write_csv(cfg.out_dir / f"zeta{sfx}.csv", ["t", "zeta"],
                      ([tv, sol.riccati.zeta[v]] for v, tv in enumerate(t)))
            write_csv(cfg.out_dir / f"convergence{sfx}.csv", ["iteration", "l2_diff"],
                      ([j + 1, d] for j, d in enumerate(sol.pair.convergence)))
            payoff = (mfg_payoff(sol, p) if variant is Variant.MFG
                      else mfc_payoff(sol, p))
            write_json(cfg.out_dir / f"solution{sfx}.json", {
                "variant": variant.value,
                "method": method.value,
                "iterations": sol.pair.iterations,
                "residual": sol.pair.residual,
                "final_diff": float(sol.pair.convergence[-1]),
                "radius_estimate": sol.pair.radius_estimate,
                "payoff": payoff,
                "config": resolved_config_dict(cfg),
            })
            if cfg.render_plots:
                title = f"{variant.value} ({method.value})"
                plots.save_solution_figure(cfg.out_dir / f"solution{sfx}.png",
                                           t, sol.pair.eta, sol.pair.chi, title)
                plots.save_convergence_figure(cfg.out_dir / f"convergence{sfx}.png",
                                              sol.pair.convergence, title)
            print(f"solve {variant.value}/{method.value}: {sol.pair.iterations} iterations, "
                  f"residual {sol.pair.residual:.3e}, payoff {payoff:.6g}")
    return 0


def cmd_poa(cfg: RunConfig) -> int:
    """Both variants with both methods, on the raw and tracking-weighted problems."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    base = cfg.problem
    tracking = validate_problem(conjugate_weights_by_output(base))
    table = {}
    for method in (SolveMethod.FIXED_POINT, SolveMethod.NEWTON):
        table[method.value] = {}
        for label, prob in (("state_average", base), ("tracking", tracking)):
            mfg_sol = solve_mean_field(prob, Variant.MFG, method=method,
                                       damping=cfg.damping, tol=cfg.tol,
                                       max_iter=cfg.max_iter)
            mfc_sol = solve_mean_field(prob, Variant.MFC, method=method,
                                       damping=cfg.damping, tol=cfg.tol,
                                       max_iter=cfg.max_iter)
            report = payoff_report(prob, mfg_sol, mfc_sol)
            table[method.value][label] = {
                "poa": report.poa,
                "j_mfg": report.j_mfg,
                "j_mfc": report.j_mfc,
                "breakdown": report.breakdown,
            }
    write_json(cfg.out_dir / "poa.json", {"table": table,
                                          "config": resolved_config_dict(cfg)})
    if cfg.render_plots:
        plots.save_poa_figure(cfg.out_dir / "poa.png", table)
    for method, entries in table.items():
        for label, entry in entries.items():
            print(f"poa {method}/{label}: {entry['poa']:.6f} "
                  f"(J_mfg={entry['j_mfg']:.6g}, J_mfc={entry['j_mfc']:.6g})")
    return 0


def _quantile_stats(values: np.ndarray) -> dict:
    return {"mean": values.mean(axis=0),
            "p10": np.quantile(values, 0.10, axis=0),
            "p50": np.quantile(values, 0.50, axis=0),
            "p90": np.quantile(values, 0.90, axis=0)}


def cmd_simulate(cfg: RunConfig) -> int:
    """Closed-loop ensembles: mean-consistency report and link-quality series."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    p = cfg.problem
    t = p.grid.points()
    method = SolveMethod.NEWTON if cfg.method == "both" else SolveMethod(cfg.method)
    for variant in cfg.variants():
        sol = _solve(cfg, variant, method)
        sfx = cfg.suffix(variant, None)
        ensembles = [simulate_ensemble(p, sol, cfg.n_agents, cfg.seed + r)
                     for r in range(cfg.repetitions)]
        errors = [mean_consistency_error(e, sol.pair.eta) for e in ensembles]
        eta_norm = trajectory_l2_norm(p.grid, sol.pair.eta)

        mean_path = empirical_mean(ensembles[0])
        header = (["t"] + [f"mean_{i + 1}" for i in range(p.n)]
                  + [f"eta_{i + 1}" for i in range(p.n)])
        write_csv(cfg.out_dir / f"ensemble_mean{sfx}.csv", header,
                  ([tv] + list(mean_path[v]) + list(sol.pair.eta[v])
                   for v, tv in enumerate(t)))

        consistency = {
            "mean_consistency_error": float(np.median(errors)),
            "per_repetition_errors": [float(e) for e in errors],
            "eta_l2_norm": eta_norm,
            "relative_error": float(np.median(errors)) / eta_norm if eta_norm > 0 else 0.0,
            "N": cfg.n_agents,
            "seed": cfg.seed,
            "repetitions": cfg.repetitions,
            "variant": variant.value,
        }
        if cfg.repetitions > 1:
            sizes = sorted({max(2, cfg.n_agents // 16), max(2, cfg.n_agents // 4),
                            cfg.n_agents})
            medians = []
            for size in sizes:
                errs = [mean_consistency_error(
                    simulate_ensemble(p, sol, size, cfg.seed + r), sol.pair.eta)
                    for r in range(cfg.repetitions)]
                medians.append(float(np.median(errs)))
            consistency["scaling"] = {"N": sizes, "median_errors": medians}
            if len(sizes) > 1:
                slope = np.polyfit(np.log(sizes), np.log(medians), 1)[0]
                consistency["scaling"]["fitted_exponent"] = float(slope)
        write_json(cfg.out_dir / f"consistency{sfx}.json", consistency)

        series = tracking_timeseries(ensembles[0], p, cfg.link)
        theta_norm = np.sqrt((series.theta ** 2).sum(axis=2))
        ts = _quantile_stats(theta_norm)
        ats = _quantile_stats(series.attenuation)
        write_csv(cfg.out_dir / f"tracking{sfx}.csv",
                  ["t", "theta_norm_mean", "theta_norm_p10", "theta_norm_p50",
                   "theta_norm_p90", "attenuation_mean", "attenuation_p10",
                   "attenuation_p50", "attenuation_p90"],
                  ([tv, ts["mean"][v], ts["p10"][v], ts["p50"][v], ts["p90"][v],
                    ats["mean"][v], ats["p10"][v], ats["p50"][v], ats["p90"][v]]
                   for v, tv in enumerate(t)))
        if cfg.render_plots:
            plots.save_ensemble_figure(cfg.out_dir / f"ensemble_mean{sfx}.png",
                                       t, mean_path, sol.pair.eta, cfg.n_agents)
            plots.save_tracking_figure(cfg.out_dir / f"tracking{sfx}.png", t, ts, ats)
        print(f"simulate {variant.value}: N={cfg.n_agents}, "
              f"consistency error {consistency['mean_consistency_error']:.4g} "
              f"({100 * consistency['relative_error']:.3f}% of the mean path)")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfbeam",
        description="Mean-field beam-tracking solver: competitive and cooperative "
                    "strategies, payoffs, and ensemble validation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "integrate the value ODEs and the mean-field pair"),
                            ("poa", "price-of-anarchy table over methods and weightings"),
                            ("simulate", "Monte-Carlo ensemble of the N-agent closed loop")):
        cp = sub.add_parser(name, help=help_text)
        cp.add_argument("--config", required=True, help="problem configuration file")
        cp.add_argument("--out", default=None,
                        help=f"output directory (default: ${ENV_OUT_DIR} or ./mfbeam_out)")
        cp.add_argument("--variant", choices=["mfg", "mfc", "both"], default=None)
        cp.add_argument("--method", choices=["fixed-point", "newton", "both"], default=None)
        cp.add_argument("--seed", type=int, default=None)
        cp.add_argument("--no-plots", action="store_true",
                        help="skip rendering PNG figures")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        command = {"solve": cmd_solve, "poa": cmd_poa, "simulate": cmd_simulate}[args.command]
        return command(cfg)
    except CONFIG_ERRORS as exc:
        print(f"mfbeam: configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"mfbeam: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
