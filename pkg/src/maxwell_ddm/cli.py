"""Benchmark driver: configuration, sweeps and CSV / SVG reports.

Run ``python -m maxwell_ddm --help`` for the subcommands.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ddm import DdmConfig, build_subproblems, run_ddm
from .fem import (EdgeSpace, MaterialMap, PlaneWave, build_block_system, evaluate_field,
                  from_real, l2_error, robin_load)
from .mesh import GeometrySpec, build_rect_mesh, partition_grid
from .solver import (PRECONDITIONERS, GmresConfig, PreconditionerFailure, SingularMatrixError,
                     SparseLU, gmres, make_preconditioner)

log = logging.getLogger("maxwell_ddm")

TABLE1_HEADER = ["omega", "preconditioner", "iterations", "converged", "walltime_s",
                 "factor_nnz", "peak_bytes"]
TABLE2_HEADER = ["subdomain", "avg_inner_gmres_iters"]
MIN_CELLS_PER_WAVELENGTH = 10


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    geometry: str = "block"
    nx: int = 64
    ny: int = 64
    omega: float = 5.0
    precond: str = "block_diag"
    mode: str = "single"
    px: int = 1
    py: int = 1
    outer: str = "gmres"
    inner: str = "gmres"
    tol: float = 1e-6
    rel_tol: float = 1e-8
    restart: int = 50
    max_iterations: int = 1000
    max_outer: int = 200
    kappa: float = 1.0
    workers: int = 1
    out_dir: str = "out"
    omegas: tuple[float, ...] = (5.0, 10.0, 20.0, 40.0)
    preconds: tuple[str, ...] = ("ilu0", "ssor", "schur", "block_diag")
    refinements: int = 3
    resolution: int = 128

    @property
    def gmres(self) -> GmresConfig:
        return GmresConfig(self.rel_tol, self.restart, self.max_iterations)

    @property
    def ddm(self) -> DdmConfig:
        return DdmConfig(outer_solver=self.outer, tol=self.tol, max_outer=self.max_outer,
                         inner=self.inner, inner_gmres=self.gmres, workers=self.workers)

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.omega

    def geometry_spec(self) -> GeometrySpec:
        return {"block": GeometrySpec.block, "ybranch": GeometrySpec.ybranch,
                "plain": GeometrySpec.plain}[self.geometry]()


_INT = {"nx", "ny", "px", "py", "restart", "max_iterations", "max_outer", "workers",
        "refinements", "resolution"}
_FLOAT = {"omega", "lambda", "tol", "rel_tol", "kappa"}
_STR = {"geometry", "precond", "mode", "outer", "inner", "out_dir"}
_LIST = {"omegas", "preconds"}
KEYS = _INT | _FLOAT | _STR | _LIST


def _convert(key: str, raw: str):
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return float(raw)
    if key == "omegas":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if key == "preconds":
        return tuple(v for v in raw.replace(",", " ").split())
    return raw.strip()


def read_config_file(path) -> dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Merge file values and overrides (overrides win) into a validated config."""
    values: dict[str, object] = {}
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        unknown = set(overrides) - KEYS
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        for k, v in overrides.items():
            values[k] = _convert(k, v) if isinstance(v, str) and k not in _STR else v
    if "omega" in values and "lambda" in values:
        raise ConfigError("give either omega or lambda, not both")
    if "lambda" in values:
        lam = float(values.pop("lambda"))
        if lam <= 0:
            raise ConfigError("lambda must be positive")
        values["omega"] = 2 * math.pi / lam
    if "workers" not in values and os.environ.get("MAXWELL_DDM_WORKERS"):
        values["workers"] = int(os.environ["MAXWELL_DDM_WORKERS"])
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.geometry not in ("block", "ybranch", "plain"):
        raise ConfigError(f"unknown geometry {cfg.geometry!r}")
    for name in (cfg.precond, *cfg.preconds):
        if name not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner {name!r}")
    if cfg.mode not in ("single", "ddm"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.omega <= 0:
        raise ConfigError("omega must be positive")
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError("nx and ny must be positive")
    if cfg.nx % cfg.px or cfg.ny % cfg.py:
        raise ConfigError(f"partition {cfg.px}x{cfg.py} does not divide mesh {cfg.nx}x{cfg.ny}")
    try:
        cfg.gmres
        cfg.ddm
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def resolution_warning(cfg: RunConfig, omega: float | None = None) -> str | None:
    """Message when the core wavelength has fewer than 10 cells."""
    omega = cfg.omega if omega is None else omega
    geom = cfg.geometry_spec()
    h = max(1.0 / cfg.nx, 1.0 / cfg.ny)
    cells = 2 * math.pi / (omega * geom.n_core) / h
    if cells < MIN_CELLS_PER_WAVELENGTH:
        return (f"omega={omega:g}: only {cells:.1f} cells per core wavelength "
                f"(< {MIN_CELLS_PER_WAVELENGTH})")
    return None


def _setup(cfg: RunConfig, omega: float, nx: int | None = None, ny: int | None = None):
    mesh = build_rect_mesh(nx or cfg.nx, ny or cfg.ny, cfg.geometry_spec())
    mat = MaterialMap.from_mesh(mesh, kappa=cfg.kappa)
    space = EdgeSpace(mesh)
    system = build_block_system(space, mat, omega, PlaneWave())
    return mesh, mat, space, system


def solve_system(system, precond_name: str, gcfg: GmresConfig):
    """GMRES on the block operator with a named preconditioner."""
    P = make_preconditioner(precond_name, system.K, system.B)
    x, rep = gmres(system.operator(), system.rhs_real, P, gcfg)
    if P.note:
        rep.note = (rep.note + "; " if rep.note else "") + P.note
    return from_real(x), rep


def run_single(cfg: RunConfig, write: bool = True):
    """Assemble and solve the single-domain problem; returns (report, field, space)."""
    msg = resolution_warning(cfg)
    if msg:
        log.warning(msg)
    _, _, space, system = _setup(cfg, cfg.omega)
    field, rep = solve_system(system, cfg.precond, cfg.gmres)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_residuals(out / "residuals.csv", rep.residual_history)
        export_intensity(space, field, cfg.resolution, out)
    return rep, field, space


def write_residuals(path, history) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "relative_residual"])
        for k, r in enumerate(history):
            w.writerow([k, repr(float(r))])


def run_table1(cfg: RunConfig, omegas=None, preconds=None, write: bool = True) -> list[dict]:
    """Sweep omegas x preconditioners; one row per pair, failures included."""
    omegas = list(cfg.omegas if omegas is None else omegas)
    preconds = list(cfg.preconds if preconds is None else preconds)
    rows = []
    for omega in omegas:
        msg = resolution_warning(cfg, omega)
        if msg:
            log.warning(msg)
        _, _, _, system = _setup(cfg, omega)
        for name in preconds:
            try:
                _, rep = solve_system(system, name, cfg.gmres)
                row = dict(omega=omega, preconditioner=name, iterations=rep.iterations,
                           converged=rep.converged, walltime_s=rep.walltime,
                           factor_nnz=rep.factor_nnz, peak_bytes=rep.peak_bytes_estimate)
            except (PreconditionerFailure, SingularMatrixError, ValueError) as exc:
                log.warning("omega=%g %s failed: %s", omega, name, exc)
                row = dict(omega=omega, preconditioner=name, iterations=cfg.max_iterations,
                           converged=False, walltime_s=0.0, factor_nnz=0, peak_bytes=0)
            log.info("omega=%g %-10s iterations=%d converged=%s", omega, name,
                     row["iterations"], row["converged"])
            rows.append(row)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "table1.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, TABLE1_HEADER)
            w.writeheader()
            for row in rows:
                w.writerow({**row, "omega": repr(float(row["omega"])),
                            "converged": str(row["converged"]).lower(),
                            "walltime_s": f"{row['walltime_s']:.6f}"})
    return rows


def run_ddm_bench(cfg: RunConfig, write: bool = True):
    """DDM solve with per-subdomain inner GMRES accounting."""
    msg = resolution_warning(cfg)
    if msg:
        log.warning(msg)
    mesh = build_rect_mesh(cfg.nx, cfg.ny, cfg.geometry_spec())
    mat = MaterialMap.from_mesh(mesh, kappa=cfg.kappa)
    part = partition_grid(mesh, cfg.px, cfg.py)
    dcfg = cfg.ddm
    problems = build_subproblems(mesh, part, mat, cfg.omega, dcfg, PlaneWave())
    result = run_ddm(problems, dcfg)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "table2.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TABLE2_HEADER)
            for sid, avg in sorted(result.inner_averages.items()):
                w.writerow([sid, repr(float(avg))])
        with (out / "outer_residuals.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "relative_residual"])
            for k, r in enumerate(result.report.residual_history):
                w.writerow([k, repr(float(r))])
    return result


def run_convergence(cfg: RunConfig, refinements: int | None = None,
                    amplitude: complex = 1.0, theta: float = math.pi / 6,
                    write: bool = True) -> list[dict]:
    """Plane-wave convergence study on the plain square with exact Robin data.

    Meshes ``nx * 2**k`` for ``k < refinements``; rate is ``log2(e_h / e_{h/2})``.
    """
    refinements = cfg.refinements if refinements is None else refinements
    exact = PlaneWave.at_angle(theta, amplitude)
    rows = []
    for k in range(refinements):
        n = cfg.nx * 2 ** k
        mesh = build_rect_mesh(n, n, GeometrySpec.plain())
        mat = MaterialMap.uniform(mesh.n_cells, kappa=cfg.kappa)
        space = EdgeSpace(mesh)
        bnd = space.outer_edges()
        system = build_block_system(space, mat, cfg.omega, None, port_edges=[],
                                    absorbing_edges=bnd)
        system.rhs = robin_load(space, exact, bnd, cfg.omega, mat)
        u = from_real(SparseLU(system.operator()).solve(system.rhs_real))
        err = l2_error(space, u, exact, cfg.omega)
        rate = None
        if rows and rows[-1]["l2_error"] > 0 and err > 0:
            rate = math.log2(rows[-1]["l2_error"] / err)
        rows.append(dict(h=1.0 / n, l2_error=err, rate=rate))
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "convergence.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "l2_error", "rate"])
            for r in rows:
                w.writerow([repr(r["h"]), repr(r["l2_error"]),
                            "" if r["rate"] is None else repr(r["rate"])])
    return rows


def intensity_grid(space: EdgeSpace, field: np.ndarray, resolution: int):
    """|E|^2 at cell-centred sample points of a ``resolution``^2 grid."""
    x0, x1, y0, y1 = space.mesh.extent
    xs = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
    ys = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    E = evaluate_field(space, field, pts)
    return pts, np.sum(np.abs(E) ** 2, axis=1)


def export_intensity(space: EdgeSpace, field: np.ndarray, resolution: int, out_dir) -> np.ndarray:
    """Write ``intensity.csv`` (x,y,intensity) and a grayscale ``intensity.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pts, inten = intensity_grid(space, field, resolution)
    with (out / "intensity.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "intensity"])
        for (x, y), v in zip(pts, inten):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    write_svg(out / "intensity.svg", inten.reshape(resolution, resolution))
    return inten


def write_svg(path, img: np.ndarray, pixel: int = 4) -> None:
    """Heatmap with a 256-level grayscale ramp; row 0 of ``img`` is the bottom."""
    ny, nx = img.shape
    top = img.max()
    levels = np.zeros(img.shape, int) if top <= 0 else np.rint(255 * img / top).astype(int)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * pixel}" '
             f'height="{ny * pixel}" shape-rendering="crispEdges">']
    for j in range(ny):
        y = (ny - 1 - j) * pixel
        for i in range(nx):
            g = levels[j, i]
            parts.append(f'<rect x="{i * pixel}" y="{y}" width="{pixel}" height="{pixel}" '
                         f'fill="rgb({g},{g},{g})"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--geometry", choices=["block", "ybranch", "plain"])
    common.add_argument("--nx", type=int)
    common.add_argument("--ny", type=int)
    freq = common.add_mutually_exclusive_group()
    freq.add_argument("--omega", type=float, help="angular wave number")
    freq.add_argument("--lambda", dest="lambda_", metavar="LAMBDA", type=float,
                      help="wavelength, omega = 2 pi / lambda")
    common.add_argument("--precond", choices=PRECONDITIONERS)
    common.add_argument("--px", type=int)
    common.add_argument("--py", type=int)
    common.add_argument("--outer", choices=["gmres", "jacobi"])
    common.add_argument("--inner", choices=["direct", "gmres"])
    common.add_argument("--tol", type=float, help="outer DDM tolerance")
    common.add_argument("--rel-tol", type=float, help="GMRES relative tolerance")
    common.add_argument("--restart", type=int)
    common.add_argument("--max-iterations", type=int)
    common.add_argument("--max-outer", type=int)
    common.add_argument("--kappa", type=float)
    common.add_argument("--workers", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--resolution", type=int, help="intensity grid points per side")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="maxwell-ddm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="single-domain (or DDM) solve")
    t1 = sub.add_parser("table1", parents=[common], help="preconditioner sweep")
    t1.add_argument("--omegas", help="comma separated list")
    t1.add_argument("--preconds", help="comma separated list")
    sub.add_parser("ddm", parents=[common], help="DDM with per-subdomain accounting")
    cv = sub.add_parser("convergence", parents=[common], help="plane-wave convergence")
    cv.add_argument("--refinements", type=int)
    sub.add_parser("intensity", parents=[common], help="intensity map export")
    return p


def _overrides(args) -> dict:
    skip = {"command", "config", "verbose", "lambda_"}
    out = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if args.lambda_ is not None:
        out["lambda"] = args.lambda_
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        over = _overrides(args)
        if args.config and ("omega" in over or "lambda" in over):
            # a command-line frequency replaces whichever one the file gives
            file_vals = read_config_file(args.config)
            file_vals.pop("omega", None)
            file_vals.pop("lambda", None)
            cfg = parse_config(None, {**file_vals, **over})
        else:
            cfg = parse_config(args.config, over)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "solve":
            if cfg.px * cfg.py > 1 or cfg.mode == "ddm":
                ok = run_ddm_bench(cfg).report.converged
            else:
                ok = run_single(cfg)[0].converged
        elif args.command == "table1":
            ok = all(r["converged"] for r in run_table1(cfg))
        elif args.command == "ddm":
            ok = run_ddm_bench(dataclasses.replace(cfg, mode="ddm")).report.converged
        elif args.command == "convergence":
            rows = run_convergence(cfg)
            for r in rows:
                print(f"h={r['h']:.5f}  L2={r['l2_error']:.4e}  rate={r['rate']}")
            ok = True
        else:
            rep, fieldv, space = run_single(cfg, write=False)
            export_intensity(space, fieldv, cfg.resolution, cfg.out_dir)
            ok = rep.converged
    except (SingularMatrixError, PreconditionerFailure, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
