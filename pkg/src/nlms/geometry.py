"""Lattice geometry, cylinder domains and discrete sets with exterior closure.

A :class:`CellSet` stores one bit per window cell.  Outside the window every
column carries a *far structure*: in column ``c`` a lattice row ``r`` is a
member iff ``r < colh[c]`` (or ``r >= colh[c]`` for an inverted set).
Columns beyond the window on the left/right use the constants ``left`` and
``right``.  Membership is therefore defined on the whole lattice, which makes
translations and complements exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class GridDescriptor:
    """Window [-W', W'] x [-H, H] split into ``nx`` columns and ``ny`` rows of side ``h``."""

    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.h <= 0 or self.nx <= 0 or self.ny <= 0:
            raise ValueError("grid needs positive h, nx, ny")

    @property
    def half_width(self) -> float:
        return 0.5 * self.nx * self.h

    @property
    def half_height(self) -> float:
        return 0.5 * self.ny * self.h

    @property
    def shape(self):
        return (self.ny, self.nx)

    def col_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.h - self.half_width

    def row_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.h - self.half_height

    def rows_below(self, u) -> np.ndarray:
        """Number of rows (counted from the window bottom) whose centers lie below ``u``.

        The result is not clipped, so heights outside the window stay exact.
        """
        u = np.asarray(u, dtype=float)
        return np.ceil((u + self.half_height) / self.h - 0.5).astype(np.int64)

    def row_boundary(self, rows) -> np.ndarray:
        """Height of the lattice line below row index ``rows``."""
        return np.asarray(rows, dtype=float) * self.h - self.half_height


@dataclass(frozen=True)
class CylinderDomain:
    """Omega = omega_o x R with omega_o a finite union of open intervals."""

    intervals: tuple

    def __post_init__(self):
        ivs = sorted((float(a), float(b)) for a, b in self.intervals)
        if not ivs:
            raise ValueError("omega_o must contain at least one interval")
        merged = []
        for a, b in ivs:
            if b <= a:
                raise ValueError(f"empty interval ({a}, {b})")
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
            else:
                merged.append((a, b))
        object.__setattr__(self, "intervals", tuple(merged))

    @property
    def R_o(self) -> float:
        return max(max(abs(a), abs(b)) for a, b in self.intervals)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x > a) & (x < b)
        return out

    def boundary_distance(self, x) -> np.ndarray:
        """Distance from x' to the complement of omega_o (0 outside omega_o)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for a, b in self.intervals:
            inside = (x > a) & (x < b)
            out = np.where(inside, np.minimum(x - a, b - x), out)
        return out

    def shifted(self, dx: float) -> "CylinderDomain":
        return CylinderDomain(tuple((a + dx, b + dx) for a, b in self.intervals))


@dataclass(frozen=True)
class ExteriorGraphData:
    """Exterior datum u sampled at window column centers.

    ``u`` holds one value per window column (values on omega_o columns are
    ignored); ``u_left``/``u_right`` extend u beyond the window.
    """

    u: np.ndarray
    u_left: float | None = None
    u_right: float | None = None

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def M_R(self, grid: GridDescriptor, dom: CylinderDomain, R: float) -> float:
        x = grid.col_centers()
        mask = (~dom.contains(x)) & (np.abs(x) <= R)
        vals = list(self.u[mask])
        if R > grid.half_width:
            vals += [self.left_value(dom, grid), self.right_value(dom, grid)]
        return float(max(vals)) if vals else -math.inf

    def left_value(self, dom, grid) -> float:
        return float(self.u[0]) if self.u_left is None else float(self.u_left)

    def right_value(self, dom, grid) -> float:
        return float(self.u[-1]) if self.u_right is None else float(self.u_right)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CellSet:
    """Binary configuration on the window plus its closure outside the window."""

    grid: GridDescriptor
    bits: np.ndarray
    colh: np.ndarray
    left: float
    right: float
    frozen: np.ndarray
    inverted: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = self.grid
        object.__setattr__(self, "bits", _readonly(self.bits, bool))
        object.__setattr__(self, "colh", _readonly(self.colh, float))
        object.__setattr__(self, "frozen", _readonly(self.frozen, bool))
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", float(self.right))
        if self.bits.shape != g.shape:
            raise ValueError(f"bit array shape {self.bits.shape} != grid {g.shape}")
        if self.colh.shape != (g.nx,) or self.frozen.shape != (g.nx,):
            raise ValueError("column arrays must have one entry per column")
        expect = self._far_rule(np.arange(g.ny)[:, None], self.colh[None, :])
        bad = self.frozen[None, :] & (self.bits != expect)
        if bad.any():
            cols = sorted(set(np.nonzero(bad)[1].tolist()))
            raise ValueError(f"exterior columns {cols} do not follow the exterior datum")

    def _far_rule(self, rows, heights):
        below = rows < heights
        return ~below if self.inverted else below

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        return (self.grid == other.grid and self.inverted == other.inverted
                and self.left == other.left and self.right == other.right
                and np.array_equal(self.bits, other.bits)
                and np.array_equal(self.colh, other.colh)
                and np.array_equal(self.frozen, other.frozen))

    __hash__ = None

    # -- construction -----------------------------------------------------

    @classmethod
    def subgraph(cls, grid: GridDescriptor, heights, frozen=None, left=None, right=None):
        """Set whose column ``c`` holds the rows below ``heights[c]`` (lattice units)."""
        heights = np.asarray(heights, dtype=float)
        frozen = np.zeros(grid.nx, bool) if frozen is None else frozen
        rows = np.arange(grid.ny)[:, None]
        bits = rows < heights[None, :]
        left = heights[0] if left is None else left
        right = heights[-1] if right is None else right
        return cls(grid, bits, heights, left, right, frozen)

    @classmethod
    def from_problem(cls, grid: GridDescriptor, dom: CylinderDomain,
                     ext: ExteriorGraphData, interior=None):
        """Closure of the exterior datum with optional interior bits on omega_o columns.

        Without ``interior`` the free columns continue the flat extension at
        height 0 (the lattice line nearest to x_n = 0).
        """
        x = grid.col_centers()
        free = dom.contains(x)
        heights = grid.rows_below(ext.u)
        mid = grid.ny // 2
        heights = np.where(free, mid, heights)
        rows = np.arange(grid.ny)[:, None]
        bits = rows < heights[None, :]
        if interior is not None:
            interior = np.asarray(interior, bool)
            bits = np.where(free[None, :], interior, bits)
        left = grid.rows_below(ext.left_value(dom, grid))
        right = grid.rows_below(ext.right_value(dom, grid))
        return cls(grid, bits, heights, left, right, ~free)

    def with_bits(self, bits) -> "CellSet":
        """Same closure, new window bits (exterior columns must still follow u)."""
        return CellSet(self.grid, bits, self.colh, self.left, self.right,
                       self.frozen, self.inverted)

    def complement(self) -> "CellSet":
        return CellSet(self.grid, ~self.bits, self.colh, self.left, self.right,
                       self.frozen, not self.inverted)

    # -- membership -------------------------------------------------------

    def column_heights(self, cols) -> np.ndarray:
        cols = np.asarray(cols)
        nx = self.grid.nx
        inner = np.clip(cols, 0, nx - 1)
        out = self.colh[inner]
        out = np.where(cols < 0, self.left, out)
        return np.where(cols >= nx, self.right, out)

    def column_frozen(self, cols) -> np.ndarray:
        cols = np.asarray(cols)
        inner = np.clip(cols, 0, self.grid.nx - 1)
        return np.where((cols < 0) | (cols >= self.grid.nx), True, self.frozen[inner])

    def extended(self, pad_rows: int, pad_cols: int) -> np.ndarray:
        """Membership on rows [-pad_rows, ny + pad_rows) x cols [-pad_cols, nx + pad_cols)."""
        g = self.grid
        rows = np.arange(-pad_rows, g.ny + pad_rows)[:, None]
        cols = np.arange(-pad_cols, g.nx + pad_cols)
        out = self._far_rule(rows, self.column_heights(cols)[None, :])
        out[pad_rows:pad_rows + g.ny, pad_cols:pad_cols + g.nx] = self.bits
        return out

    def member(self, row: int, col: int) -> bool:
        g = self.grid
        if 0 <= row < g.ny and 0 <= col < g.nx:
            return bool(self.bits[row, col])
        return bool(self._far_rule(row, self.column_heights(col)))

    def is_boundary(self, row: int, col: int) -> bool:
        """True if some edge neighbour has the opposite membership."""
        m = self.member(row, col)
        return any(self.member(row + dr, col + dc) != m for dr, dc in NEIGHBOURS)

    def boundary_cells(self, margin: int = 0):
        """Row-major list of window cells on the discrete boundary."""
        ext = self.extended(1, 1)
        core = ext[1:-1, 1:-1]
        diff = np.zeros_like(core)
        for dr, dc in NEIGHBOURS:
            diff |= core != ext[1 + dr:1 + dr + core.shape[0], 1 + dc:1 + dc + core.shape[1]]
        g = self.grid
        if margin:
            diff[:margin] = diff[-margin:] = False
            diff[:, :margin] = diff[:, -margin:] = False
        return [tuple(rc) for rc in np.argwhere(diff)]


# edge neighbours in the order used to pick the evaluation face (up first)
NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


# --------------------------------------------------------------------------
# Morphology
# --------------------------------------------------------------------------

def discrete_ball(radius_cells: float) -> np.ndarray:
    """Closed lattice ball {v : |v| <= radius} as a boolean stencil."""
    r = int(math.floor(radius_cells + 1e-12))
    ax = np.arange(-r, r + 1)
    return (ax[:, None] ** 2 + ax[None, :] ** 2) <= radius_cells ** 2 + 1e-9


def _radius_cells(E: CellSet, delta: float):
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    cells = delta / E.grid.h
    rounded = math.ceil(cells - 1e-9)
    return rounded, rounded * E.grid.h


def _reach(ball):
    """Largest vertical offset in the ball for each horizontal offset."""
    r = ball.shape[0] // 2
    return {wc: int(np.max(np.nonzero(ball[:, wc + r])[0]) - r) for wc in range(-r, r + 1)}


def _far_morph(E: CellSet, ball, grow: bool):
    """Far structure after dilation (grow) or erosion of E by ``ball``."""
    r = ball.shape[0] // 2
    reach = _reach(ball)
    cols = np.arange(E.grid.nx)
    # member iff row < colh: dilation raises heights, erosion lowers them;
    # inverted sets (member iff row >= colh) behave the other way round
    up = grow != E.inverted
    cand = []
    for wc, wr in reach.items():
        hc = E.column_heights(cols - wc)
        cand.append(hc + wr if up else hc - wr)
    cand = np.array(cand)
    colh = cand.max(axis=0) if up else cand.min(axis=0)
    shift = r if up else -r
    return colh, E.left + shift, E.right + shift


def _morph(E: CellSet, delta: float, grow: bool) -> CellSet:
    rc, used = _radius_cells(E, delta)
    if rc == 0:
        return CellSet(E.grid, E.bits, E.colh, E.left, E.right, E.frozen,
                       E.inverted, {"delta": used})
    ball = discrete_ball(rc)
    pad = 2 * rc + 1
    ext = E.extended(pad, pad)
    if grow:
        out = ndimage.binary_dilation(ext, structure=ball)
    else:
        out = ndimage.binary_erosion(ext, structure=ball, border_value=0)
    g = E.grid
    colh, left, right = _far_morph(E, ball, grow)
    res = CellSet(g, out[pad:pad + g.ny, pad:pad + g.nx], colh, left, right,
                  np.zeros(g.nx, bool), E.inverted, {"delta": used})
    check = res.extended(rc, rc)
    band = out[pad - rc:pad + g.ny + rc, pad - rc:pad + g.nx + rc]
    if not np.array_equal(check, band):
        raise ValueError("morphology leaves the window; enlarge the window")
    return res


def supconvolve(E: CellSet, delta: float) -> CellSet:
    """Union of closed lattice balls of radius ``delta`` centred at the cells of E."""
    return _morph(E, delta, grow=True)


def subconvolve(E: CellSet, delta: float) -> CellSet:
    """Cells whose closed lattice ball of radius ``delta`` lies inside E."""
    return _morph(E, delta, grow=False)


def translate(E: CellSet, v) -> CellSet:
    """Shift E by the lattice vector ``v = (dcol, drow)``; the closure moves along."""
    dc, dr = int(v[0]), int(v[1])
    g = E.grid
    pr, pc = abs(dr), abs(dc)
    ext = E.extended(pr, pc)
    bits = ext[pr - dr:pr - dr + g.ny, pc - dc:pc - dc + g.nx]
    cols = np.arange(g.nx) - dc
    return CellSet(g, bits, E.column_heights(cols) + dr, E.left + dr, E.right + dr,
                   E.column_frozen(cols), E.inverted)


# --------------------------------------------------------------------------
# Regions
# --------------------------------------------------------------------------

REGIONS = ("Omega", "Omega_eta", "C_R", "D_R_eta", "P_trap", "P_graph")


def region_mask(dom: CylinderDomain, g: GridDescriptor, which: str, **params) -> np.ndarray:
    """Boolean (ny, nx) mask of cells whose centers satisfy the region predicate."""
    x = g.col_centers()[None, :] * np.ones((g.ny, 1))
    y = g.row_centers()[:, None] * np.ones((1, g.nx))
    if which == "Omega":
        return dom.contains(x)
    if which == "Omega_eta":
        eta = params["eta"]
        return dom.contains(x) & (dom.boundary_distance(x) >= eta - 1e-12)
    if which == "C_R":
        return np.abs(x) < params["R"]
    if which == "D_R_eta":
        R, eta = params["R"], params["eta"]
        inner = region_mask(dom, g, "Omega_eta", eta=2 * eta)
        return inner | ((np.abs(x) < R) & ~dom.contains(x))
    if which == "P_trap":
        R, lam = params["R"], params["lam"]
        ax = np.abs(x)
        lens = R - np.sqrt(np.clip(R * R - ax * ax, 0.0, None))
        return (ax <= lam * R) & (np.abs(y) <= lens)
    if which == "P_graph":
        L, alpha, C_o = params["L"], params["alpha"], params["C_o"]
        ax = np.abs(x)
        return (ax <= L) & (np.abs(y) <= C_o * ax ** (1 + alpha))
    raise ValueError(f"unknown region {which!r}; expected one of {REGIONS}")


def region_cells(dom: CylinderDomain, g: GridDescriptor, which: str, **params) -> np.ndarray:
    """Row-major flat indices (row * nx + col) of the cells in a region."""
    return np.flatnonzero(region_mask(dom, g, which, **params))
