"""Exact minimization by minimum cut, single-flip descent and the sliding construction.

Free cells are the window cells on omega_o columns.  The energy of a
configuration is a unary part (interaction with frozen cells and tails) plus
w_ab for every disagreeing free pair, so it is a graph-representable
submodular function.  Capacities are quantized to int64 on a scale fine
enough that the induced energy error is far below 1e-12 relative; the flow
itself then runs in exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .energy import EnergyValue, InteractionModel, s_perimeter, _model_for
from .geometry import (CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor,
                       region_mask, translate)
from .kernel import Kernel

DEFAULT_LIMIT = 2 ** 14
DEFAULT_TRUNCATION = 64


class InvariantViolation(RuntimeError):
    """Internal consistency check failed."""


class LimitExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    grid: GridDescriptor
    dom: CylinderDomain
    exterior: ExteriorGraphData
    kernel: Kernel
    truncation: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if len(self.exterior.u) != self.grid.nx:
            raise ValueError("exterior data needs one sample per window column")
        if not self.free_columns.any():
            raise ValueError("omega_o contains no column centre of the window")
        if self.free_columns[0] or self.free_columns[-1]:
            raise ValueError("omega_o must stay inside the window")

    @property
    def free_columns(self) -> np.ndarray:
        return self.dom.contains(self.grid.col_centers())

    @property
    def free_cells(self) -> np.ndarray:
        """(row, col) of the free cells, row-major."""
        return np.argwhere(np.ones(self.grid.shape, bool) & self.free_columns[None, :])

    def initial(self, interior=None) -> CellSet:
        return CellSet.from_problem(self.grid, self.dom, self.exterior, interior)

    def flat_extension(self) -> CellSet:
        """Free columns continue the exterior datum from the nearest exterior column."""
        g = self.grid
        u = np.array(self.exterior.u, float)
        ext_idx = np.nonzero(~self.free_columns)[0]
        near = ext_idx[np.argmin(np.abs(np.arange(g.nx)[:, None] - ext_idx[None, :]), axis=1)]
        heights = g.rows_below(u[near])
        bits = np.arange(g.ny)[:, None] < heights[None, :]
        return self.initial(bits)

    def model(self) -> InteractionModel:
        return _model_for(self.initial(), self.dom, self.kernel, self.grid)


@dataclass
class FlowNetwork:
    """Terminals are nodes ``n_free`` (member side) and ``n_free + 1`` (non-member side).

    ``unary_member[a]`` is paid when free cell a is a member, ``unary_non[a]``
    when it is not; ``pairs``/``pair_w`` hold the retained free-free arcs.
    """

    n_free: int
    unary_member: np.ndarray
    unary_non: np.ndarray
    pairs: np.ndarray
    pair_w: np.ndarray
    offset: float
    truncation_bound: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def arc_count(self) -> int:
        return len(self.pairs) + 2 * self.n_free

    def energy(self, x) -> float:
        """Cut energy of a member indicator over the free cells (plus the offset)."""
        x = np.asarray(x, bool)
        un = np.where(x, self.unary_member, self.unary_non)
        dis = x[self.pairs[:, 0]] != x[self.pairs[:, 1]]
        return math.fsum(un.tolist()) + math.fsum(self.pair_w[dis].tolist()) + self.offset


@numba.njit(cache=True)
def _collect_pairs(rows, cols, W, ny, nx, radius2):
    n = rows.size
    count = 0
    for a in range(n):
        for b in range(a + 1, n):
            dr = rows[b] - rows[a]
            dc = cols[b] - cols[a]
            if dr * dr + dc * dc <= radius2:
                count += 1
    pairs = np.empty((count, 2), np.int64)
    w = np.empty(count)
    folded = 0.0
    k = 0
    for a in range(n):
        for b in range(a + 1, n):
            dr = rows[b] - rows[a]
            dc = cols[b] - cols[a]
            wab = W[dr + ny, dc + nx]
            if dr * dr + dc * dc <= radius2:
                pairs[k, 0] = a
                pairs[k, 1] = b
                w[k] = wab
                k += 1
            else:
                folded += wab
    return pairs, w, folded


def build_cut_graph(p: Problem) -> FlowNetwork:
    """Unary and pair capacities whose cuts reproduce the discrete energy.

    Pairs beyond ``p.truncation`` cells are folded into the constant offset at
    half weight (a disagreement indicator replaced by its neutral mean); the
    resulting energy error is at most the folded weight over two.
    """
    model = p.model()
    E0 = p.initial()
    sums = model.local_sums(E0)
    unary_member = sums[1] + sums[5]
    unary_non = sums[0] + sums[4]
    rows = model.free_cells[:, 0].astype(np.int64)
    cols = model.free_cells[:, 1].astype(np.int64)
    pairs, w, folded = _collect_pairs(rows, cols, np.asarray(model.weights),
                                      p.grid.ny, p.grid.nx, float(p.truncation) ** 2)
    net = FlowNetwork(model.n_free, unary_member, unary_non, pairs, w, 0.5 * folded,
                      0.5 * folded, {"truncation_cells": float(p.truncation)})
    if (net.unary_member < 0).any() or (net.unary_non < 0).any() or (w < 0).any():
        raise InvariantViolation("negative capacity in the cut graph")
    return net


# --------------------------------------------------------------------------
# Max flow: FIFO push-relabel with global relabelling on int64 capacities
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _csr(n, tails, heads, caps, rcaps):
    m = tails.size
    deg = np.zeros(n + 1, np.int64)
    for e in range(m):
        deg[tails[e] + 1] += 1
        deg[heads[e] + 1] += 1
    start = np.cumsum(deg)
    pos = start[:-1].copy()
    head = np.empty(2 * m, np.int64)
    cap = np.empty(2 * m, np.int64)
    rev = np.empty(2 * m, np.int64)
    for e in range(m):
        u = tails[e]
        v = heads[e]
        i = pos[u]
        j = pos[v]
        pos[u] += 1
        pos[v] += 1
        head[i] = v
        cap[i] = caps[e]
        rev[i] = j
        head[j] = u
        cap[j] = rcaps[e]
        rev[j] = i
    return start, head, cap, rev


@numba.njit(cache=True)
def _distances_to(n, start, head, cap, rev, target):
    """BFS distances to ``target`` through arcs with positive residual capacity."""
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    dist[target] = 0
    queue[0] = target
    qh = 0
    qt = 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        for e in range(start[v], start[v + 1]):
            u = head[e]
            if dist[u] < 0 and cap[rev[e]] > 0:
                dist[u] = dist[v] + 1
                queue[qt] = u
                qt += 1
    return dist


@numba.njit(cache=True)
def _global_relabel(n, start, head, cap, rev, sink, source, label):
    dist = _distances_to(n, start, head, cap, rev, sink)
    for v in range(n):
        if v == source:
            label[v] = n
        elif dist[v] >= 0:
            label[v] = dist[v]
        else:
            label[v] = n


@numba.njit(cache=True)
def _push_relabel(n, start, head, cap, rev, source, sink):
    """Maximum preflow; returns the flow value into the sink."""
    excess = np.zeros(n, np.int64)
    label = np.zeros(n, np.int64)
    current = start[:-1].copy()
    _global_relabel(n, start, head, cap, rev, sink, source, label)
    queue = np.empty(n + 1, np.int64)
    inq = np.zeros(n, np.bool_)
    qh = 0
    qt = 0
    size = n + 1
    for e in range(start[source], start[source + 1]):
        c = cap[e]
        if c > 0:
            v = head[e]
            cap[e] = 0
            cap[rev[e]] += c
            excess[v] += c
            if v != sink and not inq[v] and label[v] < n:
                queue[qt % size] = v
                qt += 1
                inq[v] = True
    work = 0
    budget = 6 * n + start[n]
    while qh < qt:
        u = queue[qh % size]
        qh += 1
        inq[u] = False
        if label[u] >= n:
            continue
        while excess[u] > 0:
            e = current[u]
            if e == start[u + 1]:
                # relabel
                best = 2 * n
                for f in range(start[u], start[u + 1]):
                    if cap[f] > 0 and label[head[f]] + 1 < best:
                        best = label[head[f]] + 1
                label[u] = best if best < n else n
                current[u] = start[u]
                work += 12 + start[u + 1] - start[u]
                if label[u] >= n:
                    break
                continue
            v = head[e]
            if cap[e] > 0 and label[u] == label[v] + 1:
                d = excess[u] if excess[u] < cap[e] else cap[e]
                cap[e] -= d
                cap[rev[e]] += d
                excess[u] -= d
                excess[v] += d
                if v != sink and v != source and not inq[v]:
                    queue[qt % size] = v
                    qt += 1
                    inq[v] = True
            else:
                current[u] = e + 1
        if work > budget:
            work = 0
            _global_relabel(n, start, head, cap, rev, sink, source, label)
            for v in range(n):
                current[v] = start[v]
            # requeue active nodes after the relabel
            qh = 0
            qt = 0
            for v in range(n):
                inq[v] = False
            for v in range(n):
                if v != source and v != sink and excess[v] > 0 and label[v] < n:
                    queue[qt] = v
                    qt += 1
                    inq[v] = True
    return excess[sink]


def _quantize(net: FlowNetwork):
    total = math.fsum(net.unary_member.tolist()) + math.fsum(net.unary_non.tolist()) \
        + math.fsum(net.pair_w.tolist())
    unit = max(total, 1e-300) / 2.0 ** 60
    q = lambda a: np.rint(np.asarray(a) / unit).astype(np.int64)  # noqa: E731
    return q(net.unary_member), q(net.unary_non), q(net.pair_w), unit


def min_cut(net: FlowNetwork):
    """Minimal member set of a minimum cut, as a boolean vector over free cells.

    The flow is sent from the non-member terminal to the member terminal, so
    that the nodes still able to reach the member terminal in the residual
    graph of a maximum preflow form the smallest optimal member set.
    """
    n = net.n_free
    mem_t, non_t = n, n + 1
    um, un, pw, unit = _quantize(net)
    free = np.arange(n, dtype=np.int64)
    # arc a -> member terminal is cut when a is a non-member (pays unary_non);
    # non-member terminal -> a is cut when a is a member (pays unary_member)
    tails = np.concatenate([np.full(n, non_t), free, net.pairs[:, 0]]).astype(np.int64)
    heads = np.concatenate([free, np.full(n, mem_t), net.pairs[:, 1]]).astype(np.int64)
    caps = np.concatenate([um, un, pw]).astype(np.int64)
    rcaps = np.concatenate([np.zeros(2 * n, np.int64), pw]).astype(np.int64)
    start, head, cap, rev = _csr(n + 2, tails, heads, caps, rcaps)
    flow = _push_relabel(n + 2, start, head, cap, rev, non_t, mem_t)
    reach = _distances_to(n + 2, start, head, cap, rev, mem_t) >= 0
    return reach[:n], flow * unit


# --------------------------------------------------------------------------
# Minimizers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SolveResult:
    cells: CellSet
    energy: EnergyValue
    cut_value: float
    offset: float
    truncation_bound: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter((self.cells, self.energy))


def _assemble(p: Problem, x) -> CellSet:
    E0 = p.initial()
    bits = np.array(E0.bits)
    r, c = p.free_cells.T
    bits[r, c] = x
    return E0.with_bits(bits)


def minimize_exact(p: Problem, limit: int = DEFAULT_LIMIT) -> SolveResult:
    """Global minimizer of the discrete energy; the minimal one among ties."""
    nfree = len(p.free_cells)
    if nfree > limit:
        raise LimitExceeded(
            f"{nfree} free cells exceed the exact-solver limit {limit}; use minimize_descent")
    net = build_cut_graph(p)
    x, flow = min_cut(net)
    E = _assemble(p, x)
    en = s_perimeter(E, p.dom, p.kernel, p.grid)
    cut = net.energy(x)
    if net.truncation_bound == 0.0 and abs(cut - en.value) > 1e-9 * max(1.0, en.value):
        raise InvariantViolation(f"cut energy {cut} disagrees with Per_s {en.value}")
    return SolveResult(E, en, cut, net.offset, net.truncation_bound,
                       {"flow": flow, "arcs": net.arc_count, "free_cells": nfree})


def minimize_descent(p: Problem, init: CellSet | None = None, rel_tol: float = 1e-12,
                     max_sweeps: int = 10_000) -> SolveResult:
    """Row-major single-flip descent to a configuration no flip improves."""
    model = p.model()
    E = p.initial() if init is None else init
    if E.grid != p.grid or not np.array_equal(E.frozen, ~p.free_columns):
        raise ValueError("initial set does not respect the exterior closure")
    sums = model.local_sums(E)
    x = model.free_bits(E).copy()
    un_m = sums[1] + sums[5]
    un_n = sums[0] + sums[4]
    ny, nx = p.grid.ny, p.grid.nx
    rows, cols = model.free_cells.T
    W = np.asarray(model.weights)
    # free-partner weights: members (fm) and all (fa)
    fm = sums[2].copy()
    fa = sums[2] + sums[3]
    energy = s_perimeter(E, p.dom, p.kernel, p.grid).value
    flips = 0
    for sweep in range(max_sweeps):
        changed = False
        for a in range(model.n_free):
            cost_m = un_m[a] + (fa[a] - fm[a])
            cost_n = un_n[a] + fm[a]
            delta = cost_n - cost_m if x[a] else cost_m - cost_n
            if delta < -rel_tol * max(abs(energy), 1e-300):
                x[a] = not x[a]
                wa = W[rows - rows[a] + ny, cols - cols[a] + nx]
                fm += wa if x[a] else -wa
                energy += delta
                flips += 1
                changed = True
        if not changed:
            break
    Eout = _assemble(p, x)
    en = s_perimeter(Eout, p.dom, p.kernel, p.grid)
    return SolveResult(Eout, en, en.value, 0.0, 0.0, {"flips": flips, "sweeps": sweep + 1})


# --------------------------------------------------------------------------
# Sliding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactReport:
    t: float
    t_cells: int
    contact_cells: tuple
    kinds: tuple

    def as_dict(self):
        return {"t": self.t, "t_cells": self.t_cells,
                "contacts": [{"row": int(r), "col": int(c), "kind": k}
                             for (r, c), k in zip(self.contact_cells, self.kinds)]}


def slide_contact(E: CellSet, region, dom: CylinderDomain | None = None,
                  max_shift: int | None = None) -> ContactReport:
    """First contact height when E slides down onto itself from above.

    ``t`` is the least shift such that E + t' e_n contains E on ``region`` for
    every t' >= t up to ``max_shift`` cells; contacts are boundary member cells
    of E that are also boundary cells of E + t e_n.
    """
    g = E.grid
    region = np.asarray(region, dtype=np.int64).ravel()
    if region.size and (region.min() < 0 or region.max() >= g.nx * g.ny):
        raise ValueError("region cells outside the window")
    rr, cc = np.divmod(region, g.nx)
    max_shift = 2 * g.ny if max_shift is None else int(max_shift)
    M = E.extended(max_shift, 0)
    inside = M[rr + max_shift, cc]

    def contains(t):
        return bool(np.all(~inside | M[rr + max_shift - t, cc]))

    if not contains(max_shift):
        raise ValueError("no contact height within the window; enlarge the window")
    t = max_shift
    while t > 0 and contains(t - 1):
        t -= 1
    shifted = translate(E, (0, t))
    bd_e = set(E.boundary_cells())
    bd_t = set(shifted.boundary_cells())
    regset = set(zip(rr.tolist(), cc.tolist()))
    contacts = sorted(c for c in bd_e & bd_t if c in regset and E.bits[c])
    kinds = ()
    if dom is not None:
        inner = region_mask(dom, g, "Omega_eta", eta=2 * g.h)
        kinds = tuple("interior" if inner[c] else "boundary" for c in contacts)
    else:
        kinds = tuple("unclassified" for _ in contacts)
    return ContactReport(t * g.h, t, tuple((int(a), int(b)) for a, b in contacts), kinds)
