"""Verifiers for the structural statements: graph property, stickiness, trapped
regions, spikes, curvature continuity, overlap defects and density bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .curvature import nmc
from .geometry import (CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor,
                       region_mask)
from .kernel import Kernel, box_exterior_pieces, point_cell_table


# --------------------------------------------------------------------------
# Graph property and stickiness
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphReport:
    is_graph: bool
    v: dict
    violations: tuple

    def as_dict(self):
        return {"is_graph": self.is_graph,
                "v": {int(c): float(h) for c, h in sorted(self.v.items())},
                "violations": [{"col": int(c), "gap": [float(a), float(b)]}
                               for c, (a, b) in self.violations]}


def _omega_columns(dom: CylinderDomain, g: GridDescriptor) -> np.ndarray:
    return np.nonzero(dom.contains(g.col_centers()))[0]


def graph_check(E: CellSet, dom: CylinderDomain) -> GraphReport:
    """Check that every omega_o column is a run of members followed by non-members.

    ``v`` maps each column index to the lower edge of its first non-member
    cell; violations list the non-member runs that have members above them.
    """
    g = E.grid
    v, violations = {}, []
    for c in _omega_columns(dom, g):
        col = E.bits[:, c]
        k = int(np.argmin(col)) if not col.all() else g.ny
        if col[k:].any():
            r = k
            while r < g.ny:
                if not col[r]:
                    top = r
                    while top < g.ny and not col[top]:
                        top += 1
                    if top < g.ny:
                        violations.append((int(c), (float(g.row_boundary(r)),
                                                    float(g.row_boundary(top)))))
                    r = top
                else:
                    r += 1
        else:
            v[int(c)] = float(g.row_boundary(k))
    return GraphReport(not violations, v if not violations else {}, tuple(violations))


@dataclass(frozen=True)
class StickinessReport:
    columns: tuple
    v: tuple
    u: tuple
    gaps: tuple
    max_gap: float

    def as_dict(self):
        return {"columns": [int(c) for c in self.columns], "v": list(self.v),
                "u": list(self.u), "gaps": list(self.gaps), "max_gap": self.max_gap}


def stickiness_check(E: CellSet, dom: CylinderDomain, exterior: ExteriorGraphData
                     ) -> StickinessReport:
    """Gap v - u between each boundary column of omega_o and its exterior neighbour."""
    rep = graph_check(E, dom)
    if not rep.is_graph:
        raise ValueError("stickiness needs a set that is a subgraph on omega_o")
    g = E.grid
    free = dom.contains(g.col_centers())
    cols, vs, us, gaps = [], [], [], []
    for c in _omega_columns(dom, g):
        for nb in (c - 1, c + 1):
            if 0 <= nb < g.nx and not free[nb]:
                cols.append(int(c))
                vs.append(rep.v[int(c)])
                us.append(float(exterior.u[nb]))
                gaps.append(vs[-1] - us[-1])
    return StickinessReport(tuple(cols), tuple(vs), tuple(us), tuple(gaps),
                            float(max(gaps)) if gaps else 0.0)


# --------------------------------------------------------------------------
# Trapped regions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LemmaRow:
    params: dict
    measured: float
    reference: float
    ratio: float
    flagged: bool = False

    def as_dict(self):
        return dict(self.params, measured=self.measured, reference=self.reference,
                    ratio=self.ratio, flagged=self.flagged)


def _slab(T, p):
    """int_{-T}^{T} (1 + tau^2)^-p d tau."""
    x = T * T / (1.0 + T * T)
    return special.beta(0.5, p - 0.5) * special.betainc(0.5, p - 0.5, x)


def _radial_integral(height, top: float, k: Kernel, order: int, rel_stop: float = 1e-8):
    """int over |x'| < top, |x_n| < height(|x'|) of |x|^-(n+2s), by dyadic shells in |x'|."""
    n, s = k.n, float(k.s)
    p = 0.5 * (n + 2 * s)
    sphere = 2.0 if n == 2 else 2 * math.pi
    nodes, weights = np.polynomial.legendre.leggauss(order)

    def integrand(a):
        return sphere * a ** (n - 2) * a ** (1 - n - 2 * s) * _slab(height(a) / a, p)

    total, b, levels = 0.0, top, 0
    while True:
        a = 0.5 * b
        x = a + (b - a) * 0.5 * (nodes + 1)
        part = 0.5 * (b - a) * float(np.sum(weights * integrand(x)))
        total += part
        levels += 1
        if part < rel_stop * total or levels > 400:
            break
        b = a
    return total


def trap_integral(R: float, lam: float, k: Kernel, resolution: int = 12) -> LemmaRow:
    """Weighted measure of the region trapped between two tangent balls of radius R.

    The reference is R^-2s times the same integral at R = 1 (exact scaling).
    """
    if R <= 0 or not 0 < lam <= 1:
        raise ValueError("need R > 0 and lam in (0, 1]")

    def measure(rad, order):
        return _radial_integral(lambda a: rad - np.sqrt(rad * rad - a * a), lam * rad, k, order)

    val = measure(R, resolution)
    check = measure(R, 2 * resolution)
    ref = R ** (-2 * k.s) * measure(1.0, resolution)
    return LemmaRow({"R": R, "lam": lam, "s": float(k.s), "n": k.n}, val, ref, val / ref,
                    abs(val - check) > 1e-2 * abs(check))


def graph_trap_integral(L: float, alpha: float, C_o: float, k: Kernel,
                        resolution: int = 12) -> LemmaRow:
    """Weighted measure of {|x'| <= L, |x_n| <= C_o |x'|^(1+alpha)}.

    The reference is the bounding integral of 2 C_o |x'|^(1+alpha) / |x'|^(n+2s),
    so the ratio never exceeds 1.
    """
    s = float(k.s)
    if not 2 * s < alpha <= 1:
        raise ValueError("alpha must lie in (2s, 1]")
    if L <= 0 or C_o <= 0:
        raise ValueError("need L > 0 and C_o > 0")
    val = _radial_integral(lambda a: C_o * a ** (1 + alpha), L, k, resolution)
    check = _radial_integral(lambda a: C_o * a ** (1 + alpha), L, k, 2 * resolution)
    sphere = 2.0 if k.n == 2 else 2 * math.pi
    ref = sphere * 2 * C_o * L ** (alpha - 2 * s) / (alpha - 2 * s)
    return LemmaRow({"L": L, "alpha": alpha, "C_o": C_o, "s": s, "n": k.n}, val, ref,
                    val / ref, abs(val - check) > 1e-2 * abs(check))


def fit_power_law(x, y):
    """Least-squares slope and prefactor of log y against log x."""
    slope, icpt = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope), float(math.exp(icpt))


# --------------------------------------------------------------------------
# Spikes, density, curvature probes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpikeReport:
    M: float
    clearance: int
    ok: bool

    def as_dict(self):
        return {"M": self.M, "clearance": self.clearance, "ok": self.ok}


def spike_bound_check(E: CellSet, dom: CylinderDomain, exterior: ExteriorGraphData | None = None,
                      min_clearance: int = 2) -> SpikeReport:
    """Highest member cell over omega_o and its distance to the window top."""
    g = E.grid
    top_rows = []
    for c in _omega_columns(dom, g):
        rows = np.nonzero(E.bits[:, c])[0]
        if rows.size:
            top_rows.append(int(rows[-1]) + 1)
    if not top_rows:
        return SpikeReport(-math.inf, g.ny, True)
    top = max(top_rows)
    clearance = g.ny - top
    return SpikeReport(float(g.row_boundary(top)), clearance, clearance >= min_clearance)


def density_ratio(E: CellSet, x, r: float) -> float:
    """Fraction of member cells among cells whose centres lie in the closed ball B_r(x)."""
    g = E.grid
    if r < 2 * g.h - 1e-12:
        raise ValueError("radius must be at least 2h")
    rc = r / g.h
    k = int(math.floor(rc + 1e-9))
    row, col = int(x[0]), int(x[1])
    if row - k < 0 or col - k < 0 or row + k >= g.ny or col + k >= g.nx:
        raise ValueError("ball leaves the window")
    ax = np.arange(-k, k + 1)
    ball = ax[:, None] ** 2 + ax[None, :] ** 2 <= rc * rc + 1e-9
    patch = E.bits[row - k:row + k + 1, col - k:col + k + 1]
    return float(patch[ball].sum()) / float(ball.sum())


def density_bounds(E: CellSet, r: float, margin: int | None = None):
    """Density ratios at every boundary cell whose ball fits in the window."""
    g = E.grid
    k = int(math.floor(r / g.h + 1e-9))
    out = []
    for cell in E.boundary_cells(margin=k if margin is None else margin):
        out.append((cell, density_ratio(E, cell, r)))
    return out


@dataclass(frozen=True)
class ProbeReport:
    samples: tuple
    discrepancies: tuple
    last_vs_limit: float
    all_nonpositive: bool
    terminal_nonpositive: bool


def curvature_continuity_probe(E: CellSet, x_seq, x_o, k: Kernel, g: GridDescriptor,
                               tol: float = 1e-2, **nmc_kw) -> ProbeReport:
    """Curvature along boundary cells approaching x_o, with Cauchy-type discrepancies."""
    samples = [nmc(E, x, k, g, **nmc_kw) for x in x_seq]
    limit = nmc(E, x_o, k, g, **nmc_kw)
    vals = [smp.value for smp in samples]
    disc = tuple(abs(b - a) for a, b in zip(vals, vals[1:]))
    allneg = all(v <= 0 for v in vals)
    return ProbeReport(tuple(samples) + (limit,), disc, abs(vals[-1] - limit.value) if vals else 0.0,
                       allneg, (limit.value <= tol) if allneg else True)


# --------------------------------------------------------------------------
# Overlap defect
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DefectValue:
    value: float
    contained: bool
    diagnostics: dict = field(default_factory=dict, compare=False)


def overlap_defect_integral(A: CellSet, B: CellSet, region, p, k: Kernel,
                            rho_cells: float = 0.5) -> DefectValue:
    """int over region of (chi_{B \\ A} - chi_{A \\ B})(y) |p - y|^-(n+2s) dy.

    ``region`` is a list of row-major flat cell indices and ``p`` a cell whose
    centre is the base point.  The disk of radius ``rho_cells`` cells around the
    centre is excluded so that a difference cell at p stays finite.
    """
    g = A.grid
    if B.grid != g:
        raise ValueError("sets live on different grids")
    region = np.asarray(region, dtype=np.int64).ravel()
    rr, cc = np.divmod(region, g.nx)
    pr, pc = int(p[0]), int(p[1])
    table = point_cell_table(k, (g.nx, g.ny), (0, 0), rho_cells, g.h).T
    w = table[rr - pr + g.ny, cc - pc + g.nx]
    a = A.bits[rr, cc]
    b = B.bits[rr, cc]
    sign = (b & ~a).astype(float) - (a & ~b).astype(float)
    contained = bool(not np.any(a & ~b))
    return DefectValue(math.fsum((sign * w).tolist()), contained, {"cells": int(region.size)})


def outside_cylinder_weight(p, R: float, g: GridDescriptor, k: Kernel) -> float:
    """int over {|y'| >= R} of |p - y|^-(n+2s) dy for the centre of cell p (n = 2)."""
    x = float(g.col_centers()[int(p[1])])
    s = float(k.s)
    pieces = box_exterior_pieces(s, -R - x, R - x, -1.0, 1.0, 0.0, 0.0)
    return pieces["left_below"] + pieces["left_above"] + pieces["right_below"] \
        + pieces["right_above"]


def first_contact(moving: CellSet, fixed: CellSet, region, max_shift: int | None = None):
    """Least shift t such that moving + t' e_n contains ``fixed`` on region for all t' >= t.

    Returns ``(t, contacts)`` with contacts the boundary member cells of ``fixed``
    in the region that are boundary cells of the shifted set.
    """
    from .geometry import translate

    g = fixed.grid
    region = np.asarray(region, dtype=np.int64).ravel()
    rr, cc = np.divmod(region, g.nx)
    max_shift = 2 * g.ny if max_shift is None else int(max_shift)
    Mm = moving.extended(max_shift, 0)
    inside = fixed.bits[rr, cc]

    def contains(t):
        return bool(np.all(~inside | Mm[rr + max_shift - t, cc]))

    if not contains(max_shift):
        raise ValueError("no contact height within the window; enlarge the window")
    t = max_shift
    while t > -max_shift and contains(t - 1):
        t -= 1
    shifted = translate(moving, (0, t))
    regset = set(zip(rr.tolist(), cc.tolist()))
    bd = set(shifted.boundary_cells())
    contacts = sorted(c for c in fixed.boundary_cells() if c in regset and c in bd
                      and fixed.bits[c])
    return t, shifted, contacts
