"""Batch driver: uniform and adaptive convergence studies with file outputs.

Configuration is a flat INI-style file (key = value under a [study] section)
with full command-line overrides; runs are single-threaded and reproducible
byte-for-byte for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapt import AdaptiveConfig, AdaptiveTrace, adaptive_solve
from .cordes import verify_ellipticity_cordes
from .fespace import SpaceConfig
from .forms import FormParams
from .mesh import unit_square_mesh, write_mesh_txt, write_vtk
from .problems import get_problem
from .solver import SolveOptions


@dataclass
class StudyConfig:
    problem: str = "poisson_singleton"
    p: int = 2
    s: int = 0  # 0 = dg, 1 = c0ip
    q: int | None = None
    theta: float = 0.5
    sigma: float | None = None  # None -> 10 p^2
    rho: float | None = None  # None -> 10 p^4 (dg) or 0 (c0ip)
    strategy: str = "doerfler"
    strategy_param: float = 0.5
    uniform: bool = False
    levels: int = 5
    n0: int = 2
    max_dofs: int | None = None
    eta_tol: float | None = None
    seed: int = 0
    threads: int = 1
    out: str = "study_out"
    write_meshes: bool = True
    write_vtk: bool = False
    tol: float = 1e-10

    def form_params(self) -> FormParams:
        base = FormParams.defaults(self.p, self.s, theta=self.theta)
        sigma = base.sigma if self.sigma is None else self.sigma
        rho = base.rho if self.rho is None else self.rho
        return FormParams(theta=self.theta, sigma=sigma, rho=rho)

    def space_config(self) -> SpaceConfig:
        return SpaceConfig(p=self.p, s=self.s, q=self.q)


def _parse_mark(text: str) -> tuple[str, float]:
    try:
        name, param = text.split(":")
        name = name.strip()
        if name not in ("max", "doerfler"):
            raise ValueError
        return name, float(param)
    except ValueError:
        raise SystemExit(
            f"invalid --mark value {text!r}; expected max:<mu> or doerfler:<theta>"
        )


def _fit_slope(x: np.ndarray, y: np.ndarray, window: int = 3):
    """Least-squares slope of log y vs log x over the last `window` points,
    with R^2; requires at least 4 levels, else (None, None)."""
    ok = np.isfinite(y) & (y > 0)
    x, y = x[ok], y[ok]
    if len(y) < 4 or window < 2:
        return None, None
    lh, ly = np.log(x[-window:]), np.log(y[-window:])
    A = np.column_stack([lh, np.ones_like(lh)])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(res[0]) if len(res) else 0.0
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), r2


def run_study(config: StudyConfig) -> dict:
    """Execute the study, write trace.csv / summary.json / mesh exports and
    return the summary dict."""
    np.random.seed(config.seed)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    problem = get_problem(config.problem)
    mesh0 = unit_square_mesh(config.n0)
    samples = 0.5 * (
        mesh0.vertices[mesh0.tri[:, 0]]
        + 0.5 * (mesh0.vertices[mesh0.tri[:, 1]] + mesh0.vertices[mesh0.tri[:, 2]])
    )
    report = verify_ellipticity_cordes(problem, samples)
    if not report.passed:
        raise SystemExit(
            f"problem {config.problem!r} fails the ellipticity/Cordes check "
            f"(nu_est={report.nu_est:.6g}, declared nu={problem.nu:.6g})"
        )

    meshes = []

    def callback(step, mesh, space, u, rep):
        meshes.append(mesh)
        if config.write_meshes:
            write_mesh_txt(mesh, out / f"mesh_{step.k}.txt")
        if config.write_vtk:
            write_vtk(mesh, out / f"mesh_{step.k}.vtk",
                      {"eta_sq": rep.per_element})

    acfg = AdaptiveConfig(
        space=config.space_config(),
        params=config.form_params(),
        strategy=config.strategy,
        strategy_param=config.strategy_param,
        max_dofs=config.max_dofs,
        eta_tol=config.eta_tol,
        max_iters=config.levels if config.uniform or config.max_dofs is None
        else 100,
        solve_opts=SolveOptions(tol=config.tol),
        uniform=config.uniform,
    )
    trace = adaptive_solve(problem, mesh0, acfg, callback=callback)
    trace.write_csv(out / "trace.csv")
    trace.write_json(out / "trace.json")

    ndofs = np.array([s.ndofs for s in trace.steps], dtype=float)
    err = np.array([s.err_norm_k for s in trace.steps])
    eta = np.array([s.eta_total for s in trace.steps])
    slope_err, r2_err = _fit_slope(ndofs, err)
    slope_eta, r2_eta = _fit_slope(ndofs, eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(eta > 0, err / eta, np.nan)
        eff = np.where(err > 0, eta / err, np.nan)
    summary = {
        "problem": config.problem,
        "params": {
            "p": config.p,
            "s": config.s,
            "q": config.space_config().q,
            "theta": config.theta,
            "sigma": config.form_params().sigma,
            "rho": config.form_params().rho,
            "strategy": config.strategy,
            "strategy_param": config.strategy_param,
            "uniform": config.uniform,
            "seed": config.seed,
        },
        "levels": len(trace.steps),
        "slope_error": slope_err,
        "slope_error_r2": r2_err,
        "slope_eta": slope_eta,
        "slope_eta_r2": r2_eta,
        "c_rel_obs": float(np.nanmax(rel)) if np.any(np.isfinite(rel)) else None,
        "c_eff_obs": float(np.nanmax(eff)) if np.any(np.isfinite(eff)) else None,
        "nu_est": report.nu_est,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise SystemExit(f"cannot read config file {path!r}")
    merged = {}
    for section in parser.sections():
        merged.update(dict(parser.items(section)))
    return merged


_FIELD_TYPES = {
    "problem": str, "p": int, "s": int, "q": int, "theta": float,
    "sigma": float, "rho": float, "strategy": str, "strategy_param": float,
    "uniform": lambda v: str(v).lower() in ("1", "true", "yes"),
    "levels": int, "n0": int, "max_dofs": int, "eta_tol": float,
    "seed": int, "threads": int, "out": str, "tol": float,
    "write_meshes": lambda v: str(v).lower() in ("1", "true", "yes"),
    "write_vtk": lambda v: str(v).lower() in ("1", "true", "yes"),
}


def build_config(argv=None) -> StudyConfig:
    ap = argparse.ArgumentParser(
        prog="cordesfem",
        description="Adaptive DG / C0-IP studies for HJB and Isaacs equations "
        "with Cordes coefficients.",
    )
    ap.add_argument("--config", help="INI-style key = value configuration file")
    ap.add_argument("--problem")
    ap.add_argument("--p", type=int)
    ap.add_argument("--cont", choices=["dg", "c0ip"])
    ap.add_argument("--q", type=int)
    ap.add_argument("--theta", type=float)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--rho", type=float)
    ap.add_argument("--mark", help="max:<mu> or doerfler:<theta>")
    ap.add_argument("--max-dofs", type=int, dest="max_dofs")
    ap.add_argument("--eta-tol", type=float, dest="eta_tol")
    ap.add_argument("--uniform", action="store_true", default=None)
    ap.add_argument("--levels", type=int)
    ap.add_argument("--n0", type=int)
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--vtk", action="store_true", default=None)
    args = ap.parse_args(argv)

    values: dict = {}
    if args.config:
        for key, raw in _load_config_file(args.config).items():
            if key == "cont":
                values["s"] = 0 if raw == "dg" else 1
            elif key == "mark":
                values["strategy"], values["strategy_param"] = _parse_mark(raw)
            elif key in _FIELD_TYPES:
                values[key] = _FIELD_TYPES[key](raw)
            else:
                raise SystemExit(f"unknown config key {key!r}")
    for key in ("problem", "p", "q", "theta", "sigma", "rho", "max_dofs",
                "eta_tol", "levels", "n0", "out", "seed", "threads", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if args.cont is not None:
        values["s"] = 0 if args.cont == "dg" else 1
    if args.mark is not None:
        values["strategy"], values["strategy_param"] = _parse_mark(args.mark)
    if args.uniform is not None:
        values["uniform"] = True
    if args.vtk is not None:
        values["write_vtk"] = True
    try:
        return StudyConfig(**values)
    except (TypeError, ValueError) as err:
        raise SystemExit(f"invalid configuration: {err}")


def main(argv=None) -> int:
    config = build_config(argv)
    if config.threads != 1:
        print("note: assembly is single-threaded; --threads accepted for "
              "compatibility, runs remain deterministic", file=sys.stderr)
    summary = run_study(config)
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
