"""``bassbridge`` command-line interface.

Every command reads one JSON run configuration (see README) and writes CSV
artifacts into an output directory. Exit codes: 0 on success, 2 when a solver
stops at ``max_iter`` (artifacts are still written), 1 on invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BassBridgeError, MissingArtifact, NotConverged
from .grid_measures import (DiscreteMeasure, Empirical, Grid1D, LogNormal, NormalMixture,
                            TimeGrid, density_from_spec)
from .market_data import BLConfig, bl_density, mean_match, parse_chain
from .mpms_cdf import BassSolution, IterationTrace, SolverConfig, solve
from .mpms_density import DensitySolverConfig, solve_density
from .sinkhorn_ref import sinkhorn_interpolation, sinkhorn_solve
from .surfaces import build_interpolation, extend_map, local_vol
from .transport1d import MonotoneMap

log = logging.getLogger("bassbridge")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2
SOLVERS = ("cdf", "density", "sinkhorn")


class ConfigError(BassBridgeError):
    """Invalid run configuration."""


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    return "%.17g" % v


def write_csv(path: Path, header, rows):
    """Comma-separated, LF line endings, 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: Path):
    if not path.is_file():
        raise MissingArtifact(f"{path} not found")
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    return header, np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln],
                            dtype=np.float64).reshape(-1, len(header))


def _long_rows(times, x, table):
    for t, row in zip(times, table):
        for xi, v in zip(x, row):
            yield (t, xi, v)


# ---------------------------------------------------------------------------
# Configuration


def _grid(d, name) -> Grid1D:
    try:
        return Grid1D(float(d["z_min"]), float(d["z_max"]), int(d["n"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{name} needs z_min, z_max and n") from exc


def _spec(d, where):
    kind = d.get("type")
    try:
        if kind == "normal_mixture":
            return NormalMixture(tuple(d["weights"]), tuple(d["means"]), tuple(d["variances"]))
        if kind == "lognormal":
            return LogNormal(float(d["location"]), float(d["scale"]))
        if kind == "empirical":
            return Empirical(tuple(d["x"]), tuple(d["density"]))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc}") from None
    if kind == "chain":
        if "path" not in d:
            raise ConfigError(f"{where}: chain needs a path")
        return d
    raise ConfigError(f"{where}: unknown marginal type {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a JSON run configuration."""

    grid: Grid1D
    mu0: object = None
    mu1: object = None
    grid0: Grid1D | None = None
    timegrid: TimeGrid = TimeGrid(1.0, 50)
    solver: str = "cdf"
    tol: float = 1e-10
    max_iter: int = 200
    sigma_bar: float = 1.0
    quantile_points: int | None = None
    check_order: bool = True
    max_truncation: float = 1e-4
    smoothing_bandwidth: float | None = None
    rescale_factor: float = 1.0
    density: dict = field(default_factory=dict)
    out: Path | None = None
    base: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"mu0", "mu1", "grid", "grid0", "timegrid", "solver", "tol", "max_iter",
                 "sigma_bar", "quantile_points", "check_order", "max_truncation",
                 "smoothing_bandwidth", "rescale_factor", "density", "out"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        if "grid" not in d:
            raise ConfigError("configuration needs a grid")
        tg = d.get("timegrid", {})
        kw = dict(
            grid=_grid(d["grid"], "grid"),
            grid0=_grid(d["grid0"], "grid0") if "grid0" in d else None,
            timegrid=TimeGrid(float(tg.get("T", 1.0)), int(tg.get("M", 50))),
            solver=d.get("solver", "cdf"),
            tol=float(d.get("tol", 1e-10)),
            max_iter=int(d.get("max_iter", 200)),
            sigma_bar=float(d.get("sigma_bar", 1.0)),
            quantile_points=d.get("quantile_points"),
            check_order=bool(d.get("check_order", True)),
            max_truncation=float(d.get("max_truncation", 1e-4)),
            smoothing_bandwidth=d.get("smoothing_bandwidth"),
            rescale_factor=float(d.get("rescale_factor", 1.0)),
            density=dict(d.get("density", {})),
            out=Path(d["out"]) if "out" in d else None,
            base=base,
        )
        for side in ("mu0", "mu1"):
            if side in d:
                kw[side] = _spec(d[side], side)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if not self.sigma_bar > 0:
            raise ConfigError("sigma_bar must be positive")
        if self.quantile_points is not None and int(self.quantile_points) < 3:
            raise ConfigError("quantile_points must be at least 3")
        if not 0 < self.max_truncation < 1:
            raise ConfigError("max_truncation must lie in (0, 1)")
        extra = set(self.density) - {"clip_C", "rescale_m", "rescale_c", "zero_eps", "grid",
                                     "map_to_target"}
        if extra:
            raise ConfigError(f"unknown density keys: {sorted(extra)}")
        for side in ("mu0", "mu1"):
            spec = getattr(self, side)
            if isinstance(spec, dict) and not self.resolve(spec["path"]).is_file():
                raise ConfigError(f"{side}: chain file {self.resolve(spec['path'])} not found")
        if self.solver in ("cdf", "sinkhorn") and self.grid0 is not None:
            raise ConfigError("grid0 is only supported by the density solver")
        if self.solver == "density":
            self.density_config()

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def with_overrides(self, tol=None, max_iter=None, out=None) -> "RunConfig":
        kw = {}
        if tol is not None:
            kw["tol"] = tol
        if max_iter is not None:
            kw["max_iter"] = max_iter
        if out is not None:
            kw["out"] = Path(out)
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    def bl_config(self, grid: Grid1D) -> BLConfig:
        return BLConfig(grid, self.smoothing_bandwidth, self.rescale_factor)

    def marginal(self, side: str, grid: Grid1D) -> DiscreteMeasure:
        spec = getattr(self, side)
        if spec is None:
            raise ConfigError(f"configuration needs {side}")
        if isinstance(spec, dict):
            chain = parse_chain(self.resolve(spec["path"]).read_text(), spec.get("label", side))
            return bl_density(chain, self.bl_config(grid))
        return density_from_spec(spec, grid, self.max_truncation)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.grid, self.timegrid, self.sigma_bar, self.tol, self.max_iter,
                            self.quantile_points)

    def brownian_grid(self) -> Grid1D:
        g = self.density.get("grid")
        return self.grid if g is None else _grid(g, "density.grid")

    def density_config(self) -> DensitySolverConfig:
        d = self.density
        kw = dict(timegrid=self.timegrid, sigma_bar=self.sigma_bar, tol=self.tol,
                  max_iter=self.max_iter, quantile_points=self.quantile_points,
                  clip_C=float(d.get("clip_C", 1.5)), zero_eps=d.get("zero_eps"))
        try:
            if d.get("map_to_target", False):
                return DensitySolverConfig.mapping(self.brownian_grid(), self.grid, **kw)
            return DensitySolverConfig(self.brownian_grid(), rescale_m=float(d.get("rescale_m", 1.0)),
                                       rescale_c=float(d.get("rescale_c", 0.0)), **kw)
        except ValueError as exc:
            raise ConfigError(f"density: {exc}") from None

    def to_dict(self) -> dict:
        def g(grid):
            return {"z_min": grid.z_min, "z_max": grid.z_max, "n": grid.n}

        def s(spec):
            if spec is None:
                return None
            if isinstance(spec, dict):
                return dict(spec, path=str(self.resolve(spec["path"]).resolve()))
            if isinstance(spec, NormalMixture):
                return {"type": "normal_mixture", "weights": list(spec.weights),
                        "means": list(spec.means), "variances": list(spec.variances)}
            if isinstance(spec, LogNormal):
                return {"type": "lognormal", "location": spec.location, "scale": spec.scale}
            return {"type": "empirical", "x": list(spec.x), "density": list(spec.density)}

        d = {"grid": g(self.grid), "timegrid": {"T": self.timegrid.T, "M": self.timegrid.M},
             "solver": self.solver, "tol": self.tol, "max_iter": self.max_iter,
             "sigma_bar": self.sigma_bar, "quantile_points": self.quantile_points,
             "check_order": self.check_order, "max_truncation": self.max_truncation,
             "smoothing_bandwidth": self.smoothing_bandwidth,
             "rescale_factor": self.rescale_factor, "density": self.density,
             "mu0": s(self.mu0), "mu1": s(self.mu1)}
        if self.grid0 is not None:
            d["grid0"] = g(self.grid0)
        return d


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file {p} not found")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    try:
        return RunConfig.from_dict(d, base=p.parent)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None


def _out_dir(cfg: RunConfig, default: str = "bassbridge_out") -> Path:
    out = cfg.out if cfg.out is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands


def _write_solution(out: Path, sol: BassSolution, cfg: RunConfig, extra=None):
    write_csv(out / "trace.csv", ("iteration", "mse_error", "dual_value", "w_inf_step"),
              sol.trace.rows())
    x = sol.grid.points
    write_csv(out / "alpha0.csv", ("x", "value"), zip(x, sol.alpha0.density))
    write_csv(out / "F1.csv", ("x", "value"), zip(x, sol.F1.values))
    run = {"method": sol.method, "converged": sol.converged, "iterations": sol.iterations,
           "final_error": sol.trace.mse_error[-1] if len(sol.trace) else None,
           "brownian_grid": {"z_min": sol.grid.z_min, "z_max": sol.grid.z_max, "n": sol.grid.n},
           "config": cfg.to_dict()}
    if extra:
        run.update(extra)
    with open(out / "run.json", "w", newline="\n") as fh:
        json.dump(run, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_solver(cfg: RunConfig, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    """Returns ``(solution, converged)``; a NotConverged best iterate is returned unconverged."""
    t0 = time.perf_counter()
    try:
        if cfg.solver == "density":
            sol = solve_density(mu0, mu1, cfg.density_config(), check_order=cfg.check_order)
        else:
            sol = solve(mu0, mu1, cfg.solver_config(), check_order=cfg.check_order)
        ok = True
    except NotConverged as exc:
        log.warning("%s", exc)
        sol, ok = exc.best, False
    log.info("%s solver: %d iterations, %.3f s", sol.method, sol.iterations, time.perf_counter() - t0)
    return sol, ok


def _marginals(cfg: RunConfig):
    g0 = cfg.grid0 if cfg.grid0 is not None else cfg.grid
    return cfg.marginal("mu0", g0), cfg.marginal("mu1", cfg.grid)


def cmd_solve(cfg: RunConfig) -> int:
    if cfg.solver == "sinkhorn":
        return cmd_sinkhorn(cfg)
    mu0, mu1 = _marginals(cfg)
    sol, ok = _run_solver(cfg, mu0, mu1)
    _write_solution(_out_dir(cfg), sol, cfg)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _write_marginals(out: Path, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    write_csv(out / "marginals.csv", ("x", "mu0", "mu1"), zip(mu1.points, mu0.density, mu1.density))


def cmd_calibrate(cfg: RunConfig, chain0: Path, chain1: Path) -> int:
    if cfg.solver == "sinkhorn":
        raise ConfigError("calibrate runs the cdf or density solver")
    chains = []
    for p, label in ((chain0, "chain0"), (chain1, "chain1")):
        p = Path(p)
        if not p.is_file():
            raise ConfigError(f"{label}: {p} not found")
        chains.append(parse_chain(p.read_text(), label))
    bl = cfg.bl_config(cfg.grid)
    mu0, mu1 = mean_match(bl_density(chains[0], bl), bl_density(chains[1], bl))
    log.info("mean-matched marginals: mean %.6g, variances %.6g -> %.6g",
             mu0.mean(), mu0.variance(), mu1.variance())
    sol, ok = _run_solver(cfg, mu0, mu1)
    out = _out_dir(cfg)
    _write_solution(out, sol, cfg, {"chains": [str(chain0), str(chain1)]})
    _write_marginals(out, mu0, mu1)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def load_solution(sol_dir: Path) -> BassSolution:
    """Rebuild a solution from ``run.json``, ``alpha0.csv`` and ``F1.csv``."""
    sol_dir = Path(sol_dir)
    run_path = sol_dir / "run.json"
    if not run_path.is_file():
        raise MissingArtifact(f"{run_path} not found")
    run = json.loads(run_path.read_text())
    cfg = load_config_dict(run["config"])
    bg = _grid(run["brownian_grid"], "brownian_grid")
    _, a = read_csv(sol_dir / "alpha0.csv")
    _, f = read_csv(sol_dir / "F1.csv")
    if a.shape[0] != bg.n or f.shape[0] != bg.n:
        raise MissingArtifact(f"{sol_dir}: artifacts do not match the recorded grid")
    marg = sol_dir / "marginals.csv"
    if marg.is_file():
        _, m = read_csv(marg)
        mu0 = DiscreteMeasure(cfg.grid, m[:, 1])
        mu1 = DiscreteMeasure(cfg.grid, m[:, 2])
    else:
        mu0, mu1 = _marginals(cfg)
    alpha0 = DiscreteMeasure(bg, a[:, 1])
    return BassSolution(
        alpha0=alpha0, F1=MonotoneMap(bg, f[:, 1]), F0=MonotoneMap(bg, f[:, 1]),
        iterations=int(run["iterations"]), trace=IterationTrace(), converged=bool(run["converged"]),
        alpha0_cdf=np.array(alpha0.cdf), mu0=mu0, mu1=mu1, timegrid=cfg.timegrid,
        sigma_bar=cfg.sigma_bar, method=run["method"])


def load_config_dict(d: dict) -> RunConfig:
    clean = {k: v for k, v in d.items() if v is not None}
    return RunConfig.from_dict(clean)


def cmd_surface(sol_dir: Path, out: Path | None, with_local_vol: bool, extend: float | None) -> int:
    sol = load_solution(sol_dir)
    out = Path(sol_dir) if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    surf = build_interpolation(sol)
    x = sol.mu1.points
    write_csv(out / "mu_t.csv", ("t", "x", "value"),
              _long_rows(surf.times, x, [m.density for m in surf.mu]))
    if with_local_vol:
        lv = local_vol(sol)
        write_csv(out / "sigma.csv", ("t", "x", "value"),
                  ((t, xi, v) for t, xi, v in _long_rows(lv.timegrid.times, lv.x, lv.sigma)
                   if math.isfinite(v)))
    if extend is not None:
        times, rows = extend_map(sol, extend)
        write_csv(out / "F_ext.csv", ("t", "x", "value"), _long_rows(times, sol.grid.points, rows))
    return EXIT_OK


def _sinkhorn(cfg: RunConfig, mu0, mu1):
    try:
        state, trace = sinkhorn_solve(mu0, mu1, cfg.solver_config())
        ok = True
    except NotConverged as exc:
        log.warning("%s", exc)
        (state, trace), ok = exc.best, False
    return state, trace, ok


def cmd_sinkhorn(cfg: RunConfig) -> int:
    mu0, mu1 = _marginals(cfg)
    state, trace, ok = _sinkhorn(cfg, mu0, mu1)
    out = _out_dir(cfg)
    write_csv(out / "trace.csv", ("iteration", "residual0", "residual1"),
              ((i, r0, r1) for i, (r0, r1) in enumerate(zip(trace.residual0, trace.residual1), 1)))
    write_csv(out / "potentials.csv", ("x", "f0", "g1"), zip(state.grid.points, state.f0, state.g1))
    times = cfg.timegrid.times
    write_csv(out / "mu_t.csv", ("t", "x", "value"),
              _long_rows(times, state.grid.points,
                         [sinkhorn_interpolation(state, t).density for t in times]))
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_compare(cfg: RunConfig) -> int:
    if cfg.grid0 is not None:
        raise ConfigError("compare needs both marginals on one grid")
    mu0, mu1 = _marginals(cfg)
    state, _, ok_s = _sinkhorn(cfg, mu0, mu1)
    sol, ok_b = _run_solver(replace(cfg, solver="cdf"), mu0, mu1)
    surf = build_interpolation(sol)
    rows = []
    for t, m in zip(surf.times, surf.mu):
        rows.append(("mpms", t, m.mean(), m.variance()))
    for t in cfg.timegrid.times:
        m = sinkhorn_interpolation(state, t)
        rows.append(("sinkhorn", t, m.mean(), m.variance()))
    write_csv(_out_dir(cfg) / "compare.csv", ("method", "t", "mean", "variance"), rows)
    return EXIT_OK if ok_s and ok_b else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bassbridge", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--tol", type=float, help="stopping tolerance override")
        p.add_argument("--max-iter", type=int, help="iteration budget override")

    common(sub.add_parser("solve", help="solve the Bass problem for a marginal pair"))
    common(sub.add_parser("sinkhorn", help="Schrodinger-bridge reference solve"))
    common(sub.add_parser("compare", help="per-t moments of the Sinkhorn and Bass interpolations"))
    p = sub.add_parser("calibrate", help="option chains -> densities -> Bass solve")
    p.add_argument("chain0")
    p.add_argument("chain1")
    common(p)
    p = sub.add_parser("surface", help="export mu_t (and sigma, F extension) from a solve")
    p.add_argument("solution", help="directory written by solve or calibrate")
    p.add_argument("--out", help="output directory (default: the solution directory)")
    p.add_argument("--local-vol", action="store_true", help="also write sigma.csv")
    p.add_argument("--extend", type=float, metavar="T_MIN",
                   help="write F_ext.csv with F(t, .) for T_MIN <= t <= 0")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "surface":
            return cmd_surface(Path(args.solution), args.out, args.local_vol, args.extend)
        cfg = load_config(args.config).with_overrides(args.tol, args.max_iter, args.out)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sinkhorn":
            return cmd_sinkhorn(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_calibrate(cfg, Path(args.chain0), Path(args.chain1))
    except (BassBridgeError, ValueError, OSError) as exc:
        print(f"bassbridge: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
