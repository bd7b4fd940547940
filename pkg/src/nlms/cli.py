"""Command line entry point: ``nlms <command> --config <path> [--out <dir>]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import traceback
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import analysis, curvature, io, solver
from .energy import ConfigurationError
from .geometry import CylinderDomain, ExteriorGraphData, GridDescriptor, region_cells
from .kernel import Kernel

COMMANDS = ("minimize", "curvature-scan", "lemma-check", "slide", "verify")
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Section):
    h: float = Field(gt=0)
    nx: int = Field(gt=0)
    ny: int = Field(gt=0)


class DomainSpec(_Section):
    intervals: list[tuple[float, float]] = Field(min_length=1)

    @field_validator("intervals")
    @classmethod
    def _ordered(cls, v):
        for a, b in v:
            if not a < b:
                raise ValueError(f"interval ({a}, {b}) is empty")
        return v


class ExteriorSpec(_Section):
    type: Literal["constant", "jump", "breakpoints"]
    value: Optional[float] = None
    left: Optional[float] = None
    right: Optional[float] = None
    at: float = 0.0
    points: Optional[list[tuple[float, float]]] = None

    @model_validator(mode="after")
    def _fields(self):
        need = {"constant": ("value",), "jump": ("left", "right"), "breakpoints": ("points",)}
        missing = [f for f in need[self.type] if getattr(self, f) is None]
        if missing:
            raise ValueError(f"exterior type {self.type!r} needs {', '.join(missing)}")
        if self.type == "breakpoints":
            xs = [p[0] for p in self.points]
            if len(xs) < 1 or any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("breakpoints must have strictly increasing x")
        return self


class KernelSpec(_Section):
    n: Literal[2, 3] = 2
    s: float
    tail_policy: Literal["none", "halfspace_columns", "radial"] = "halfspace_columns"

    @field_validator("s")
    @classmethod
    def _s_range(cls, v):
        if not 0 < v < 0.5:
            raise ValueError("s must lie in (0, 1/2)")
        return v


class SolverSpec(_Section):
    method: Literal["exact", "descent"] = "exact"
    limit: int = Field(default=solver.DEFAULT_LIMIT, gt=0)
    truncation: float = Field(default=float(solver.DEFAULT_TRUNCATION), gt=0)


class CurvatureSpec(_Section):
    radii: list[float] = [8.0, 4.0, 2.0]
    margin: int = Field(default=8, ge=0)
    tol_pv: float = Field(default=1e-3, gt=0)


class TrapSpec(_Section):
    R: list[float] = [1.0, 2.0, 4.0, 8.0]
    lam: list[float] = [0.0625, 0.125, 0.25, 0.5]


class GraphTrapSpec(_Section):
    L: list[float] = [0.015625, 0.03125, 0.0625, 0.125, 0.25, 0.5]
    alpha: float = 0.9
    C_o: float = Field(default=1.0, gt=0)


class LemmaSpec(_Section):
    trap: TrapSpec = TrapSpec()
    graph_trap: GraphTrapSpec = GraphTrapSpec()
    resolution: int = Field(default=12, ge=2)


class VerifySpec(_Section):
    density_radius_cells: int = Field(default=8, ge=2)
    density_min: float = Field(default=0.05, ge=0, le=0.5)
    min_clearance: int = Field(default=2, ge=0)


class InputSpec(_Section):
    raster: Optional[str] = None


class OutputSpec(_Section):
    dir: str = "out"


class RunConfig(_Section):
    command: Literal["minimize", "curvature-scan", "lemma-check", "slide", "verify"]
    grid: Optional[GridSpec] = None
    domain: Optional[DomainSpec] = None
    exterior: Optional[ExteriorSpec] = None
    kernel: KernelSpec
    solver: SolverSpec = SolverSpec()
    curvature: CurvatureSpec = CurvatureSpec()
    lemma: LemmaSpec = LemmaSpec()
    verify: VerifySpec = VerifySpec()
    input: InputSpec = InputSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _problem_sections(self):
        if self.command == "lemma-check" or self.input.raster is not None:
            return self
        missing = [k for k in ("grid", "domain", "exterior") if getattr(self, k) is None]
        if missing:
            raise ValueError(f"command {self.command!r} needs sections: {', '.join(missing)}")
        return self

    def to_text(self) -> str:
        """Normalized YAML with every default spelled out."""
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def parse_config(text: str) -> RunConfig:
    """Validate a YAML document; raises :class:`ConfigError` listing every problem."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"malformed config{where}: {getattr(exc, 'problem', exc)}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a mapping"])
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        errs = []
        for e in exc.errors():
            loc = ".".join(str(p) for p in e["loc"]) or "<root>"
            msg = e["msg"].removeprefix("Value error, ")
            errs.append(f"{loc}: {msg}")
        raise ConfigError(errs) from exc


# --------------------------------------------------------------------------
# Building problems
# --------------------------------------------------------------------------

def sample_exterior(spec: ExteriorSpec, g: GridDescriptor) -> ExteriorGraphData:
    """Sample u at the window column centres (constant beyond the end breakpoints)."""
    x = g.col_centers()
    if spec.type == "constant":
        u = np.full(g.nx, spec.value)
    elif spec.type == "jump":
        u = np.where(x < spec.at, spec.left, spec.right)
    else:
        pts = np.array(spec.points, float)
        u = np.interp(x, pts[:, 0], pts[:, 1])
    return ExteriorGraphData(u)


def build_problem(cfg: RunConfig):
    g = GridDescriptor(cfg.grid.h, cfg.grid.nx, cfg.grid.ny)
    dom = CylinderDomain(tuple(cfg.domain.intervals))
    ext = sample_exterior(cfg.exterior, g)
    k = Kernel(cfg.kernel.n, cfg.kernel.s, cfg.kernel.tail_policy)
    try:
        return solver.Problem(g, dom, ext, k, cfg.solver.truncation)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def _kernel(cfg):
    return Kernel(cfg.kernel.n, cfg.kernel.s, cfg.kernel.tail_policy)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


class _Run:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.report = {"command": cfg.command, "config": cfg.model_dump(mode="json")}
        self.status = EXIT_OK

    def fail(self, reason):
        self.status = max(self.status, EXIT_VERIFY)
        self.report.setdefault("failures", []).append(reason)

    # problem + solve, or a raster from disk
    def obtain_set(self):
        cfg = self.cfg
        if cfg.input.raster is not None:
            E, dom, ext = io.read_raster(cfg.input.raster)
            if dom is None:
                raise ConfigError(["input raster metadata lacks omega_o"])
            self.report["input"] = {"raster": cfg.input.raster}
            return E, dom, ext, E.grid
        p = build_problem(cfg)
        if cfg.solver.method == "exact":
            res = solver.minimize_exact(p, cfg.solver.limit)
        else:
            res = solver.minimize_descent(p, p.flat_extension())
        self.report["energy"] = {k: _num(v) if k != "pair_count" else int(v)
                                 for k, v in res.energy.as_dict().items()}
        self.report["solver"] = {"method": cfg.solver.method, "cut_value": _num(res.cut_value),
                                 "offset": _num(res.offset),
                                 "truncation_bound": _num(res.truncation_bound)}
        io.write_raster(res.cells, self.out / "minimizer.pgm", p.dom, p.exterior)
        return res.cells, p.dom, p.exterior, p.grid

    def structure(self, E, dom, ext):
        gr = analysis.graph_check(E, dom)
        self.report["graph"] = gr.as_dict()
        if not gr.is_graph:
            self.fail("graph_check found violations")
        elif ext is not None:
            self.report["stickiness"] = analysis.stickiness_check(E, dom, ext).as_dict()
        sp = analysis.spike_bound_check(E, dom, ext, self.cfg.verify.min_clearance)
        self.report["spike"] = sp.as_dict()
        if not sp.ok:
            self.fail("spike clearance below the minimum")
        return gr

    def minimize(self):
        E, dom, ext, g = self.obtain_set()
        self.structure(E, dom, ext)

    def slide(self):
        E, dom, ext, g = self.obtain_set()
        self.structure(E, dom, ext)
        rep = solver.slide_contact(E, region_cells(dom, g, "Omega"), dom)
        self.report["contact"] = rep.as_dict()

    def curvature_scan(self):
        E, dom, ext, g = self.obtain_set()
        k = _kernel(self.cfg)
        cs = self.cfg.curvature
        M = E.extended(g.ny, g.nx)
        free = dom.contains(g.col_centers())
        samples = [curvature.nmc(E, cell, k, g, radii=tuple(cs.radii), tol_pv=cs.tol_pv, M=M)
                   for cell in E.boundary_cells(margin=cs.margin) if free[cell[1]]]
        curvature.write_scan_csv(samples, self.out / "curvature.csv")
        self.report["curvature"] = {"samples": len(samples),
                                    "converged": int(sum(s.converged for s in samples))}

    def lemma_check(self):
        k = _kernel(self.cfg)
        lc = self.cfg.lemma
        rows = []
        for R in lc.trap.R:
            rows.append(("trap", analysis.trap_integral(R, 0.5, k, lc.resolution)))
        for lam in lc.trap.lam:
            rows.append(("trap", analysis.trap_integral(1.0, lam, k, lc.resolution)))
        gt = lc.graph_trap
        for L in gt.L:
            rows.append(("graph_trap",
                         analysis.graph_trap_integral(L, gt.alpha, gt.C_o, k, lc.resolution)))
        keys = ("R", "lam", "L", "alpha", "C_o", "s", "n")
        with open(self.out / "lemma.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("kind",) + keys + ("measured", "reference", "ratio", "flagged"))
            for kind, row in rows:
                w.writerow([kind] + [row.params.get(c, "") for c in keys]
                           + [repr(row.measured), repr(row.reference), repr(row.ratio),
                              int(row.flagged)])
        lam_rows = [r for kd, r in rows[len(lc.trap.R):len(lc.trap.R) + len(lc.trap.lam)]]
        summary = {"rows": len(rows), "flagged": int(sum(r.flagged for _, r in rows))}
        if len(lam_rows) >= 2:
            summary["trap_lambda_exponent"] = analysis.fit_power_law(
                [r.params["lam"] for r in lam_rows], [r.measured for r in lam_rows])[0]
        if len(gt.L) >= 2:
            gl = [r for kd, r in rows if kd == "graph_trap"]
            summary["graph_trap_L_exponent"] = analysis.fit_power_law(
                [r.params["L"] for r in gl], [r.measured for r in gl])[0]
        self.report["lemma"] = summary
        if summary["flagged"]:
            self.fail("quadrature resolution insufficient for 1% on some rows")

    def verify(self):
        E, dom, ext, g = self.obtain_set()
        self.structure(E, dom, ext)
        vs = self.cfg.verify
        r = vs.density_radius_cells * g.h
        ratios = [d for _, d in analysis.density_bounds(E, r)]
        if ratios:
            lo, hi = min(ratios), max(ratios)
            self.report["density"] = {"radius": r, "cells": len(ratios), "min": lo, "max": hi}
            if lo < vs.density_min or hi > 1 - vs.density_min:
                self.fail("density ratio outside the admissible band")


def _write_report(out: Path, report: dict):
    with open(out / "report.yaml", "w") as fh:
        yaml.safe_dump(report, fh, sort_keys=True)


def run(cfg: RunConfig, out: Path | None = None) -> int:
    """Execute the configured command, write artifacts and return the exit status."""
    out = Path(cfg.output.dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    r = _Run(cfg, out)
    try:
        getattr(r, cfg.command.replace("-", "_"))()
    except (ConfigError, ConfigurationError, solver.LimitExceeded, ValueError) as exc:
        r.status = EXIT_CONFIG
        r.report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
    except Exception as exc:  # noqa: BLE001
        r.status = EXIT_INTERNAL
        r.report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
    r.report["status"] = r.status
    _write_report(out, r.report)
    return r.status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nlms", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--debug", action="store_true", help="print tracebacks")
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"nlms: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"nlms: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command != args.command:
        try:
            cfg = RunConfig.model_validate(dict(cfg.model_dump(mode="json"),
                                                command=args.command))
        except ValidationError as exc:
            for e in exc.errors():
                print(f"nlms: config error: {e['msg']}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        status = run(cfg, args.out)
    except Exception:  # noqa: BLE001
        if args.debug:
            traceback.print_exc()
        return EXIT_INTERNAL
    if status:
        print(f"nlms: {args.command} finished with status {status}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
