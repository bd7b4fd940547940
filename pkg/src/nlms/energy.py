"""Interaction functional L(F, G) and the discrete s-perimeter.

Every free cell (a window cell on an omega_o column) is paired with all cells
of an evaluation box centred on it.  The box is large enough to contain the
whole window from any free cell; whatever lies beyond the box is integrated
through closed-form tails against the far structure of the set.  Because the
box moves with the cell, the energy is exactly translation covariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CellSet, CylinderDomain, GridDescriptor
from .kernel import Kernel, _pair_unit, box_exterior_pieces, pair_weight_table


class ConfigurationError(ValueError):
    """Problem setup incompatible with the requested evaluation."""


@dataclass(frozen=True)
class EnergyValue:
    value: float
    tail_part: float
    pair_count: int

    def as_dict(self):
        return {"value": self.value, "tail_part": self.tail_part, "pair_count": self.pair_count}


def _cells(cells) -> np.ndarray:
    arr = np.asarray(cells, dtype=np.int64)
    return arr.reshape(-1, 2)


def interaction(F, G, k: Kernel, g: GridDescriptor) -> EnergyValue:
    """L(F, G) for two disjoint lists of lattice cells given as (row, col) pairs."""
    F, G = _cells(F), _cells(G)
    fs = {tuple(c) for c in F.tolist()}
    if any(tuple(c) in fs for c in G.tolist()):
        raise ValueError("interaction needs disjoint cell sets")
    pairs = sorted(
        (min(a, b), max(a, b)) for a in map(tuple, F.tolist()) for b in map(tuple, G.tolist())
    )
    scale = g.h ** (k.n - 2 * k.s)
    terms = [_pair_unit(k.n, k.s, (b[0] - a[0], b[1] - a[1])) for a, b in pairs]
    return EnergyValue(math.fsum(terms) * scale, 0.0, len(pairs))


def box_tail_split(E: CellSet, s: float, cols, rows, py: float, box):
    """Unit-lattice kernel integrals beyond a box, split by membership of E.

    ``cols``/``rows`` are the inclusive lattice index ranges covered by the box,
    ``py`` the row coordinate of the source point and ``box`` = (x0, x1, y0, y1)
    the box edges relative to that point.  Columns left and right of the box
    must lie beyond the window so that the constants ``E.left``/``E.right`` apply.
    """
    nx = E.grid.nx
    if cols[0] > 0 or cols[1] < nx - 1:
        raise ConfigurationError("evaluation box does not cover the window columns")
    heights = E.column_heights(np.arange(cols[0], cols[1] + 1))
    top, bottom = rows[1] + 1, rows[0]
    above_low = bool(np.all(heights <= top))
    below_high = bool(np.all(heights >= bottom))
    if not (above_low or np.all(heights == math.inf)):
        raise ConfigurationError("far structure crosses the evaluation box top")
    if not (below_high or np.all(heights == -math.inf)):
        raise ConfigurationError("far structure crosses the evaluation box bottom")
    x0, x1, y0, y1 = box
    p = box_exterior_pieces(s, x0, x1, y0, y1, E.left - py, E.right - py)
    # membership under the non-inverted rule "row < height"
    mem = (0.0 if above_low else p["above"]) + (p["below"] if below_high else 0.0) \
        + p["left_below"] + p["right_below"]
    non = (p["above"] if above_low else 0.0) + (0.0 if below_high else p["below"]) \
        + p["left_above"] + p["right_above"]
    if E.inverted:
        mem, non = non, mem
    return mem, non


class InteractionModel:
    """Pair weights and tails shared by the energy, the solver and the descent."""

    def __init__(self, grid: GridDescriptor, kernel: Kernel, free_cols):
        if kernel.n != 2:
            raise ConfigurationError("lattice energies are implemented for n = 2")
        if kernel.tail_policy == "radial":
            raise ConfigurationError(
                "radial tails carry no membership split; use halfspace_columns or none")
        self.grid = grid
        self.kernel = kernel
        self.free_cols = np.asarray(free_cols, bool)
        ny, nx = grid.ny, grid.nx
        self.weights = pair_weight_table(kernel, (ny, nx), grid.h)
        self.weights.setflags(write=False)
        free_ext = np.zeros((3 * ny, 3 * nx), bool)
        free_ext[ny:2 * ny, nx:2 * nx] = self.free_cols[None, :]
        self._free_ext = free_ext
        rows, cols = np.nonzero(np.ones(grid.shape, bool) & self.free_cols[None, :])
        self.free_cells = np.stack([rows, cols], axis=1)

    @property
    def n_free(self) -> int:
        return len(self.free_cells)

    def _box(self, arr, r, c):
        ny, nx = self.grid.ny, self.grid.nx
        return arr[r:r + 2 * ny + 1, c:c + 2 * nx + 1]

    def tails(self, E: CellSet, r: int, c: int):
        """Tail weights of cell (r, c) against members and non-members beyond its box."""
        if self.kernel.tail_policy == "none":
            return 0.0, 0.0
        ny, nx = self.grid.ny, self.grid.nx
        mem, non = box_tail_split(E, float(self.kernel.s), (c - nx, c + nx), (r - ny, r + ny),
                                  r + 0.5, (-(nx + 0.5), nx + 0.5, -(ny + 0.5), ny + 0.5))
        scale = self.grid.h ** (self.kernel.n - 2 * self.kernel.s)
        return mem * scale, non * scale

    def local_sums(self, E: CellSet):
        """Per free cell: weights to frozen members/non-members, free members/non-members,
        and tails against members/non-members (six arrays, free cells row-major)."""
        if E.grid != self.grid:
            raise ConfigurationError("cell set and model live on different grids")
        ny, nx = self.grid.ny, self.grid.nx
        M = E.extended(ny, nx)
        W = self.weights
        out = np.zeros((6, self.n_free))
        for i, (r, c) in enumerate(self.free_cells):
            mb = self._box(M, r, c)
            fb = self._box(self._free_ext, r, c)
            out[0, i] = np.sum(W * (mb & ~fb))
            out[1, i] = np.sum(W * (~mb & ~fb))
            out[2, i] = np.sum(W * (mb & fb))
            out[3, i] = np.sum(W * (~mb & fb))
            out[4, i], out[5, i] = self.tails(E, r, c)
        return out

    def free_bits(self, E: CellSet) -> np.ndarray:
        r, c = self.free_cells.T
        return E.bits[r, c]

    def pair_weight(self, a, b) -> float:
        ny, nx = self.grid.ny, self.grid.nx
        return float(self.weights[b[0] - a[0] + ny, b[1] - a[1] + nx])


def _model_for(E: CellSet, dom: CylinderDomain, k: Kernel, g: GridDescriptor) -> InteractionModel:
    if E.grid != g:
        raise ConfigurationError("cell set grid does not match the grid descriptor")
    free_cols = dom.contains(g.col_centers())
    if np.any(E.frozen == free_cols):
        raise ConfigurationError("cell set closure is inconsistent with the domain")
    key = (g, k, free_cols.tobytes())
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = InteractionModel(g, k, free_cols)
        _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = model
    return model


_MODEL_CACHE: dict = {}


def perimeter_terms(model: InteractionModel, E: CellSet, sums=None):
    """Per free cell disagreement energy (free partners at half weight) and its tail part."""
    sums = model.local_sums(E) if sums is None else sums
    x = model.free_bits(E)
    local = np.where(x, sums[1] + 0.5 * sums[3] + sums[5], sums[0] + 0.5 * sums[2] + sums[4])
    tails = np.where(x, sums[5], sums[4])
    return local, tails


def s_perimeter(E: CellSet, dom: CylinderDomain, k: Kernel, g: GridDescriptor) -> EnergyValue:
    """Per_s(E, Omega) = L(E n Omega, E^c) + L(Omega \\ E, E \\ Omega).

    Omega is truncated to the window; pairs of two frozen cells are dropped.
    """
    model = _model_for(E, dom, k, g)
    local, tails = perimeter_terms(model, E)
    count = _disagreeing_pairs(model, E)
    return EnergyValue(math.fsum(local.tolist()), math.fsum(tails.tolist()), count)


def _disagreeing_pairs(model: InteractionModel, E: CellSet) -> int:
    ny, nx = model.grid.ny, model.grid.nx
    M = E.extended(ny, nx)
    total = 0
    nonzero = model.weights > 0
    for r, c in model.free_cells:
        mb = model._box(M, r, c)
        fb = model._box(model._free_ext, r, c)
        dis = (mb != M[r + ny, c + nx]) & nonzero
        total += 2 * int(np.sum(dis & ~fb)) + int(np.sum(dis & fb))
    return total // 2


def energy_delta(E: CellSet, cell, dom: CylinderDomain, k: Kernel, g: GridDescriptor) -> float:
    """Per_s(E with ``cell`` flipped) - Per_s(E), computed from one evaluation box."""
    model = _model_for(E, dom, k, g)
    r, c = int(cell[0]), int(cell[1])
    if not (0 <= r < g.ny and 0 <= c < g.nx) or not model.free_cols[c]:
        raise ValueError(f"cell {cell} is outside Omega; exterior cells are frozen")
    ny, nx = g.ny, g.nx
    M = E.extended(ny, nx)
    mb = model._box(M, r, c)
    to_mem = np.sum(model.weights * mb)
    to_non = np.sum(model.weights * ~mb)
    t_mem, t_non = model.tails(E, r, c)
    to_mem += t_mem
    to_non += t_non
    return float(to_mem - to_non) if E.bits[r, c] else float(to_non - to_mem)
