"""Command-line front end: configuration, sweeps, and report files.

Subcommands
-----------
``verify``       manufactured-solution convergence plus geometry invariants
``sweep``        finite-element energy sweep over a gap list, with a law fit
``asymptote``    closed-form tables (strip length, energy laws, ansatz)
``lower-bound``  variational lower-bound table
``collide``      descent trajectory and contact-regime summary

Exit codes: 0 success, 1 acceptance failure, 2 usage/configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .asymptotics import (
    EnergyCurve,
    ell_leading,
    energy_leading,
    fit_model,
    lower_bound,
)
from .collision import CollisionSetup, classify, integrate_collision
from .geometry import CuspProfile, StripMap, eigen_bounds, strip_length
from .solver import manufactured_case, solve_channel_problem

__all__ = [
    "RunConfig",
    "ConfigError",
    "parse_config",
    "write_config",
    "write_report",
    "sweep_energy",
    "run_command",
    "main",
]

DEFAULT_EPS_LIST = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
FORMATS = ("csv", "json", "gnuplot-data")
WORKERS_ENV = "CUSPFLOW_WORKERS"


class ConfigError(ValueError):
    """Configuration file or parameter-range error."""


@dataclass
class RunConfig:
    """Validated run parameters shared by all subcommands."""

    alpha: float = 2.0
    kappa: float = 1.0
    delta: float = -1.0
    bottom: str = "power"
    delta_prime: float | None = None
    eps_list: tuple = DEFAULT_EPS_LIST
    n_across: int = 16
    grading: float = 1.15
    tol: float = 1e-10
    truncation: float | None = None
    d_width: float = 1.0
    m_s: float = 1.0
    rho_f: float = 1.0
    eps_star: float = 0.1
    v0: float = -1.0
    eps_stop: float = 1e-8
    rtol: float = 1e-10
    outdir: str = "out"
    formats: tuple = ("csv", "json")

    RANGES = {
        "alpha": "must be positive",
        "kappa": "must be positive",
        "delta": "must be negative",
        "n_across": "must be an integer >= 4",
        "grading": "must lie in [1, 4]",
        "tol": "must lie in (0, 1e-2]",
        "d_width": "must lie in [1, 16]",
        "eps_list": "must be strictly decreasing positive gaps",
        "m_s": "must be positive",
        "rho_f": "must be positive",
        "eps_star": "must be positive",
        "v0": "must be negative",
        "eps_stop": "must lie in (0, eps_star)",
        "rtol": "must lie in (0, 1e-4]",
        "formats": f"entries must be among {FORMATS}",
    }

    def validate(self) -> None:
        def bad(name):
            raise ConfigError(f"config value {name!r} {self.RANGES[name]}")

        if not self.alpha > 0:
            bad("alpha")
        if not self.kappa > 0:
            bad("kappa")
        if not self.delta < 0:
            bad("delta")
        if self.bottom not in ("power", "flat"):
            raise ConfigError("config value 'bottom' must be 'power' or 'flat'")
        if self.bottom == "flat" and self.delta_prime is None:
            raise ConfigError("flat profile requires the 'delta_prime' key")
        if not (isinstance(self.n_across, int) and 4 <= self.n_across <= 1024):
            bad("n_across")
        if not 1.0 <= self.grading <= 4.0:
            bad("grading")
        if not 0.0 < self.tol <= 1e-2:
            bad("tol")
        if self.truncation is not None and not self.truncation > 0:
            raise ConfigError("config value 'truncation' must be positive")
        if not 1.0 <= self.d_width <= 16.0:
            bad("d_width")
        eps = tuple(self.eps_list)
        if len(eps) == 0 or any(e <= 0 for e in eps) or any(
            b >= a for a, b in zip(eps, eps[1:])
        ):
            bad("eps_list")
        if not self.m_s > 0:
            bad("m_s")
        if not self.rho_f > 0:
            bad("rho_f")
        if not self.eps_star > 0:
            bad("eps_star")
        if not self.v0 < 0:
            bad("v0")
        if not 0.0 < self.eps_stop < self.eps_star:
            bad("eps_stop")
        if not 0.0 < self.rtol <= 1e-4:
            bad("rtol")
        if any(f not in FORMATS for f in self.formats):
            bad("formats")

    def profile(self, epsilon: float) -> CuspProfile:
        return CuspProfile(
            kappa=self.kappa,
            alpha=self.alpha,
            epsilon=epsilon,
            delta=self.delta,
            bottom=self.bottom,
            delta_prime=self.delta_prime,
        )

    def law_family(self) -> str:
        if self.bottom == "flat":
            return "power"
        if self.alpha < 2.0:
            return "bounded"
        if self.alpha == 2.0:
            return "log"
        return "power"


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("bottom", "outdir"):
        return raw
    if key == "formats":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if key == "eps_list":
        return tuple(float(s) for s in raw.replace(",", " ").split())
    if key == "n_across":
        return int(raw)
    if key in ("delta_prime", "truncation"):
        return None if raw.lower() in ("none", "") else float(raw)
    return float(raw)


def parse_config(path: str, base: RunConfig | None = None) -> RunConfig:
    """Read a ``key = value`` config file into a validated RunConfig.

    Unknown keys and malformed values are errors carrying the line number.
    """
    cfg = base if base is not None else RunConfig()
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            value = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
        cfg = replace(cfg, **{key: value})
    cfg.validate()
    return cfg


def write_config(cfg: RunConfig, path: str) -> None:
    """Write a config file that ``parse_config`` reproduces exactly."""
    with open(path, "w") as fh:
        for f in fields(RunConfig):
            if f.name == "RANGES":
                continue
            value = getattr(cfg, f.name)
            if value is None:
                text = "none"
            elif f.name in ("eps_list", "formats"):
                text = ", ".join(repr(v) if not isinstance(v, str) else v for v in value)
            else:
                text = repr(value) if not isinstance(value, str) else value
            fh.write(f"{f.name} = {text}\n")


# -- sweep orchestration ------------------------------------------------------


def _sweep_point(args):
    cfg_dict, eps = args
    cfg = RunConfig(**cfg_dict)
    profile = cfg.profile(eps)
    sol, mesh, _, _ = solve_channel_problem(
        profile,
        n_across=cfg.n_across,
        grading=cfg.grading,
        tol=cfg.tol,
        truncation=cfg.truncation,
        d_width=cfg.d_width,
    )
    return (
        eps,
        sol.dirichlet_energy,
        {
            "iterations": sol.iterations,
            "residual": sol.residual_norm,
            "nodes": mesh.n_nodes,
        },
    )


def sweep_energy(cfg: RunConfig, eps_list=None, workers: int | None = None) -> EnergyCurve:
    """Finite-element energy curve over the configured gap list.

    Sweep points are independent solves; with ``workers > 1`` (or the
    ``CUSPFLOW_WORKERS`` environment variable) they run in a process pool.
    Results keep the input order regardless of worker count.
    """
    eps_list = tuple(eps_list if eps_list is not None else cfg.eps_list)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    cfg_dict = {k: v for k, v in asdict(cfg).items()}
    jobs = [(cfg_dict, eps) for eps in eps_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_point, jobs))
    else:
        points = [_sweep_point(job) for job in jobs]
    return EnergyCurve.from_points(points)


# -- report writing -----------------------------------------------------------

CSV_HEADER = "epsilon,energy,model,ratio,iterations,residual"


def write_report(results: dict, formats, outdir: str, name: str) -> list:
    """Emit the run results as CSV / JSON / gnuplot data files.

    ``results`` must carry a nonempty ``rows`` list (dicts with the CSV
    column keys) and a ``summary`` dict echoed verbatim into the JSON.
    Returns the list of written paths.
    """
    rows = results.get("rows", [])
    if not rows:
        raise ValueError("no results to report")
    if isinstance(formats, str):
        formats = (formats,)
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unknown report format {fmt!r}")
    os.makedirs(outdir, exist_ok=True)
    written = []
    columns = CSV_HEADER.split(",")

    def cell(row, col):
        value = row.get(col, "")
        if isinstance(value, float):
            return f"{value:.12e}"
        return str(value)

    if "csv" in formats:
        path = os.path.join(outdir, f"{name}.csv")
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(",".join(cell(row, c) for c in columns) + "\n")
        written.append(path)
    if "json" in formats:
        path = os.path.join(outdir, f"{name}.json")
        with open(path, "w") as fh:
            json.dump(
                {"rows": rows, "summary": results.get("summary", {})},
                fh,
                indent=2,
                sort_keys=True,
                default=str,
            )
            fh.write("\n")
        written.append(path)
    if "gnuplot-data" in formats:
        path = os.path.join(outdir, f"{name}.dat")
        with open(path, "w") as fh:
            fh.write("# " + " ".join(columns) + "\n")
            for row in rows:
                fh.write(" ".join(cell(row, c) for c in columns) + "\n")
        written.append(path)
    return written


# -- subcommands --------------------------------------------------------------


def _cmd_verify(cfg: RunConfig) -> int:
    report = manufactured_case(cfg.n_across)
    ratio = report["energy_error_ratio"]
    ok_orders = 3.5 <= ratio <= 4.5
    print(f"manufactured energy target {report['energy_target']:.10f}")
    print(
        f"n={report['coarse']['n']}: energy error {report['coarse']['energy_error']:.3e}, "
        f"n={report['fine']['n']}: {report['fine']['energy_error']:.3e}, "
        f"ratio {ratio:.3f} (window [3.5, 4.5])"
    )
    profile = cfg.profile(cfg.eps_list[0])
    smap = StripMap(profile)
    xi = -np.geomspace(1e-6, abs(cfg.delta) * 0.999, 200)
    rt = np.max(np.abs(smap.inverse(np.clip(smap.forward(xi), 0, smap.ell * (1 - 1e-15))) - xi))
    ok_rt = rt <= 1e-10
    print(f"map round-trip max deviation {rt:.3e} (tolerance 1e-10)")
    lam1, lam2 = eigen_bounds(profile)
    ok_eig = 0.0 < lam1 <= 1.0 <= lam2
    print(f"ellipticity bounds [{lam1:.4f}, {lam2:.4f}]")
    ok = ok_orders and ok_rt and ok_eig
    print("verify:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_sweep(cfg: RunConfig) -> int:
    curve = sweep_energy(cfg)
    family = cfg.law_family()
    fit = fit_model(curve, family)
    rows = []
    for eps, energy, diag in zip(curve.epsilons, curve.energies, curve.diagnostics):
        model = energy_leading(cfg.profile(eps))
        model_value = model.value(eps) if model.kind != "bounded" else curve.energies[-1]
        rows.append(
            {
                "epsilon": eps,
                "energy": energy,
                "model": model_value,
                "ratio": energy / model_value if model_value else math.nan,
                "iterations": diag.get("iterations", 0),
                "residual": diag.get("residual", 0.0),
            }
        )
    summary = {
        "family": family,
        "fit_coefficient": fit.coefficient,
        "fit_exponent": fit.exponent,
        "fit_residual": fit.residual,
        "config": _config_dict(cfg),
    }
    paths = write_report({"rows": rows, "summary": summary}, cfg.formats, cfg.outdir, "sweep")
    print(f"sweep: {len(rows)} points, family {family}, "
          f"coefficient {fit.coefficient}, exponent {fit.exponent}")
    for p in paths:
        print("wrote", p)
    return 0


def _cmd_asymptote(cfg: RunConfig) -> int:
    rows = []
    for eps in cfg.eps_list:
        profile = cfg.profile(eps)
        model = energy_leading(profile)
        ell = strip_length(profile)
        ell_lead = ell_leading(profile)
        rows.append(
            {
                "epsilon": eps,
                "energy": model.value(eps) if model.kind != "bounded" else math.nan,
                "model": model.kind,
                "ratio": ell / ell_lead,
                "iterations": 0,
                "residual": 0.0,
            }
        )
    summary = {"law": asdict(energy_leading(cfg.profile(cfg.eps_list[0]))),
               "config": _config_dict(cfg)}
    paths = write_report({"rows": rows, "summary": summary}, cfg.formats, cfg.outdir, "asymptote")
    for p in paths:
        print("wrote", p)
    return 0


def _cmd_lower_bound(cfg: RunConfig) -> int:
    rows = []
    for eps in cfg.eps_list:
        rep = lower_bound(cfg.profile(eps))
        rows.append(
            {
                "epsilon": eps,
                "energy": rep.value,
                "model": rep.leading_term,
                "ratio": rep.value / rep.leading_term,
                "iterations": 0,
                "residual": 0.0,
            }
        )
    summary = {"zeta1_rule": "gap doubled at the inner edge", "config": _config_dict(cfg)}
    paths = write_report({"rows": rows, "summary": summary}, cfg.formats, cfg.outdir,
                         "lower_bound")
    for p in paths:
        print("wrote", p)
    return 0


def _cmd_collide(cfg: RunConfig) -> int:
    model = energy_leading(cfg.profile(cfg.eps_star))
    if model.kind == "bounded" and model.limit is None:
        curve = sweep_energy(cfg)
        setup = CollisionSetup(
            m_s=cfg.m_s, rho_f=cfg.rho_f, eps_star=cfg.eps_star, v0=cfg.v0, mass_model=curve
        )
        regime_hint = classify(cfg.profile(cfg.eps_star))
    else:
        setup = CollisionSetup(
            m_s=cfg.m_s, rho_f=cfg.rho_f, eps_star=cfg.eps_star, v0=cfg.v0, mass_model=model
        )
        regime_hint = classify(model)
    traj = integrate_collision(setup, eps_stop=cfg.eps_stop, rtol=cfg.rtol)
    regime = traj.regime if traj.regime != "Unresolved" or regime_hint == "Unresolved" else regime_hint
    os.makedirs(cfg.outdir, exist_ok=True)
    path = os.path.join(cfg.outdir, "trajectory.csv")
    with open(path, "w") as fh:
        fh.write("t,eps,v\n")
        for t, e, v in zip(traj.t, traj.eps, traj.v):
            fh.write(f"{t:.12e},{e:.12e},{v:.12e}\n")
    summary = {
        "regime": regime,
        "touchdown_time": traj.touchdown[0] if traj.touchdown else None,
        "terminal_speed": traj.touchdown[1] if traj.touchdown else None,
        "config": _config_dict(cfg),
    }
    spath = os.path.join(cfg.outdir, "collision.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"collide: regime {regime}, touchdown {summary['touchdown_time']}, "
          f"terminal speed {summary['terminal_speed']}")
    print("wrote", path)
    print("wrote", spath)
    return 0


def _config_dict(cfg: RunConfig) -> dict:
    return {k: v for k, v in asdict(cfg).items()}


COMMANDS = {
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "asymptote": _cmd_asymptote,
    "lower-bound": _cmd_lower_bound,
    "collide": _cmd_collide,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuspflow",
        description="Cusp-channel energy laboratory: sweeps, asymptotics, collisions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--alpha", type=float)
        p.add_argument("--kappa", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--flat", action="store_true", help="flat-bottom profile")
        p.add_argument("--delta-prime", type=float, dest="delta_prime")
        p.add_argument("--eps", help="comma-separated decreasing gap list")
        p.add_argument("--n", "--n-across", type=int, dest="n_across")
        p.add_argument("--grading", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--truncation", type=float)
        p.add_argument("--d-width", type=float, dest="d_width")
        p.add_argument("--outdir")
        p.add_argument("--format", dest="formats",
                       help=f"comma list among {', '.join(FORMATS)}")
        if name == "collide":
            p.add_argument("--m-s", type=float, dest="m_s")
            p.add_argument("--rho-f", type=float, dest="rho_f")
            p.add_argument("--eps-star", type=float, dest="eps_star")
            p.add_argument("--v0", type=float)
            p.add_argument("--eps-stop", type=float, dest="eps_stop")
            p.add_argument("--rtol", type=float)
    return parser


def _merge_flags(cfg: RunConfig, ns: argparse.Namespace) -> RunConfig:
    updates = {}
    for key in _FIELD_TYPES:
        if hasattr(ns, key) and getattr(ns, key) is not None:
            updates[key] = getattr(ns, key)
    if getattr(ns, "flat", False):
        updates["bottom"] = "flat"
    if getattr(ns, "eps", None):
        updates["eps_list"] = tuple(float(s) for s in ns.eps.split(","))
    if getattr(ns, "formats", None):
        updates["formats"] = tuple(s.strip() for s in ns.formats.split(","))
    return replace(cfg, **updates)


def run_command(argv) -> int:
    """Parse arguments, run the subcommand, and return the exit code."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = RunConfig()
        if ns.config:
            cfg = parse_config(ns.config, base=cfg)
        cfg = _merge_flags(cfg, ns)
        cfg.validate()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[ns.command](cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
