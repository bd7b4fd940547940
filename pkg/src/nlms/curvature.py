"""Principal-value curvature integral I_E(p) = PV int (chi_E - chi_{E^c})(y) |p - y|^-(n+2s) dy.

The evaluation point p is the midpoint of a boundary face of the cell, so that
the integrand of a discrete half-space is exactly odd about p.  Cells are
integrated exactly outside the exclusion disk B_rho(p); the disk itself
contributes zero (symmetric principal value).  Estimates at the radii
8h, 4h, 2h are combined by Richardson extrapolation in the exponent 1 - 2s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import ConfigurationError, box_tail_split
from .geometry import NEIGHBOURS, CellSet, GridDescriptor, supconvolve
from .kernel import Kernel, point_cell_table

DEFAULT_RADII = (8, 4, 2)


@dataclass(frozen=True)
class CurvatureSample:
    """Curvature estimate at one boundary face with its convergence diagnostics.

    Attributes
    ----------
    cell : (row, col) of the boundary cell.
    point : centre of that cell in length units.
    face : (dcol, drow) unit vector towards the opposite neighbour.
    value : extrapolated value when converged, else the estimate at the smallest radius.
    pv_radii : exclusion radii in length units, decreasing.
    estimates : one truncated integral per radius.
    extrapolated : Richardson value from the two smallest radii.
    converged : whether the extrapolants of consecutive radius pairs agree.
    """

    cell: tuple
    point: tuple
    face: tuple
    value: float
    pv_radii: tuple
    estimates: tuple
    extrapolated: float
    converged: bool
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def eval_point(self):
        return tuple(p + 0.5 * f * self.diagnostics.get("h", 0.0)
                     for p, f in zip(self.point, self.face))


def _span(f: int, e: int):
    """Offsets of a box symmetric about a point shifted by f/2 from a cell centre."""
    if f == 0:
        return -e, e
    return (-e + 1, e) if f > 0 else (-e, e - 1)


_TABLES: dict = {}


def _weights(k: Kernel, extent, face, rho, h):
    key = (k.n, k.s, extent, face, rho, h)
    w = _TABLES.get(key)
    if w is None:
        if len(_TABLES) > 64:
            _TABLES.clear()
        # row-first layout [ey + j, ex + i]
        w = np.ascontiguousarray(point_cell_table(k, extent, face, rho, h).T)
        w.setflags(write=False)
        _TABLES[key] = w
    return w


def opposite_face(E: CellSet, x, face=None):
    """First edge neighbour direction (up, down, right, left) with opposite membership."""
    r, c = int(x[0]), int(x[1])
    m = E.member(r, c)
    if face is not None:
        fc, fr = int(face[0]), int(face[1])
        if abs(fc) + abs(fr) != 1 or E.member(r + fr, c + fc) == m:
            raise ValueError(f"face {face} of cell {x} is not a boundary face")
        return fc, fr
    for dr, dc in NEIGHBOURS:
        if E.member(r + dr, c + dc) != m:
            return dc, dr
    raise ValueError(f"cell {tuple(x)} is not on the discrete boundary")


def truncated_integral(E: CellSet, x, face, rho_cells: float, k: Kernel,
                       g: GridDescriptor, extent=None, M=None) -> float:
    """Signed kernel integral over the lattice outside B_rho around the face midpoint."""
    r, c = int(x[0]), int(x[1])
    fx, fy = face
    ex, ey = extent if extent is not None else (g.nx, g.ny)
    ilo, ihi = _span(fx, ex)
    jlo, jhi = _span(fy, ey)
    if M is None:
        M = E.extended(ey, ex)
    W = _weights(k, (ex, ey), (fx, fy), float(rho_cells), g.h)
    W = W[ey + jlo:ey + jhi + 1, ex + ilo:ex + ihi + 1]
    box = M[r + jlo + ey:r + jhi + 1 + ey, c + ilo + ex:c + ihi + 1 + ex]
    body = float(np.sum(np.where(box, W, -W)))
    if k.tail_policy == "none":
        return body
    py = r + 0.5 + 0.5 * fy
    px = -0.5 * fx
    mem, non = box_tail_split(
        E, float(k.s), (c + ilo, c + ihi), (r + jlo, r + jhi), py,
        (ilo - 0.5 + px, ihi + 0.5 + px, jlo - 0.5 - 0.5 * fy, jhi + 0.5 - 0.5 * fy))
    return body + (mem - non) * g.h ** (-2 * k.s)


def richardson(coarse: float, fine: float, s: float) -> float:
    """Extrapolate I(rho) = I0 + C rho^(1-2s) from radii 2 rho (coarse) and rho (fine)."""
    a = 2.0 ** (1 - 2 * s)
    return (a * fine - coarse) / (a - 1)


def nmc(E: CellSet, x, k: Kernel, g: GridDescriptor, face=None, radii=DEFAULT_RADII,
        extent=None, tol_pv: float = 1e-3, M=None) -> CurvatureSample:
    """Curvature integral of E at the boundary cell ``x`` = (row, col).

    Parameters
    ----------
    face : optional (dcol, drow); defaults to the first opposite neighbour.
    radii : exclusion radii in cells, each half the previous one.
    extent : (ex, ey) half-sizes of the evaluation box in cells (default: the window).
    tol_pv : relative agreement required between consecutive extrapolants.
    """
    if E.grid != g:
        raise ConfigurationError("cell set grid does not match the grid descriptor")
    if k.n != 2:
        raise ConfigurationError("curvature sampling is implemented for n = 2")
    radii = tuple(float(rh) for rh in radii)
    if len(radii) < 2 or any(b * 2 != a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be a halving sequence of length >= 2")
    f = opposite_face(E, x, face)
    ext = extent if extent is not None else (g.nx, g.ny)
    if M is None:
        M = E.extended(ext[1], ext[0])
    est = tuple(float(truncated_integral(E, x, f, rh, k, g, ext, M)) for rh in radii)
    s = float(k.s)
    extraps = [float(richardson(a, b, s)) for a, b in zip(est, est[1:])]
    final = extraps[-1]
    if len(extraps) >= 2:
        scale = max(abs(final), 1e-3)
        converged = abs(extraps[-1] - extraps[-2]) < tol_pv * scale
    else:
        converged = False
    value = final if converged else est[-1]
    r, c = int(x[0]), int(x[1])
    centre = (float(g.col_centers()[0] + c * g.h), float(g.row_centers()[0] + r * g.h))
    return CurvatureSample((r, c), centre, f, value, tuple(rh * g.h for rh in radii), est,
                           final, bool(converged),
                           {"h": g.h, "extrapolants": tuple(extraps)})


def supconvolution_inequality_check(E: CellSet, delta: float, x_o, v, k: Kernel,
                                    g: GridDescriptor, Es: CellSet | None = None, extent=None):
    """Compare I at x_o + v on the supconvolution with I_E(x_o) at matched quadrature.

    ``v`` = (dcol, drow) is a lattice vector with |v| <= delta.  Returns
    ``(holds, margin)`` with margin = I_{E#}(x_o + v) - I_E(x_o).
    """
    dc, dr = int(v[0]), int(v[1])
    if math.hypot(dc, dr) * g.h > delta + 1e-12:
        raise ValueError("|v| exceeds delta")
    if Es is None:
        Es = supconvolve(E, delta)
    f = opposite_face(E, x_o)
    y = (int(x_o[0]) + dr, int(x_o[1]) + dc)
    if not (Es.member(*y) == E.member(*x_o)
            and Es.member(y[0] + f[1], y[1] + f[0]) != Es.member(*y)):
        raise ValueError("x_o + v is not on the supconvolution boundary with the same face")
    if extent is None:
        pad = int(math.ceil(delta / g.h))
        extent = (g.nx + pad, g.ny + pad)
    lhs = nmc(Es, y, k, g, face=f, extent=extent).extrapolated
    rhs = nmc(E, x_o, k, g, face=f, extent=extent).extrapolated
    margin = lhs - rhs
    return margin >= -1e-12, margin


def admissible_shifts(E: CellSet, Es: CellSet, x_o, delta: float, h: float):
    """Lattice vectors v with |v| <= delta for which the check at x_o is defined."""
    f = opposite_face(E, x_o)
    rad = int(math.floor(delta / h + 1e-9))
    out = []
    for dr in range(-rad, rad + 1):
        for dc in range(-rad, rad + 1):
            if dr * dr + dc * dc > (delta / h) ** 2 + 1e-9:
                continue
            y = (int(x_o[0]) + dr, int(x_o[1]) + dc)
            if Es.member(*y) == E.member(*x_o) and \
                    Es.member(y[0] + f[1], y[1] + f[0]) != Es.member(*y):
                out.append((dc, dr))
    return out


SCAN_HEADER = ("row", "col", "x", "value", "converged", "extrapolated") + \
    tuple(f"pv_{i}" for i in range(len(DEFAULT_RADII)))


def write_scan_csv(samples, path):
    """One line per sample: cell, centre x, value, converged flag and raw estimates."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for smp in samples:
            w.writerow([smp.cell[0], smp.cell[1], repr(smp.point[0]), repr(smp.value),
                        int(smp.converged), repr(smp.extrapolated)]
                       + [repr(e) for e in smp.estimates])
