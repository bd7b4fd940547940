"""Singular interaction kernel |x - y|^-(n + 2s) and its cell integrals.

All lattice integrals are computed in units of the cell side (h = 1) and
rescaled by homogeneity: a cell-pair weight scales like h^(n - 2s), a
point-to-cell weight and a point tail like h^(-2s).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

TAIL_POLICIES = ("none", "halfspace_columns", "radial")

#: center distance (in cells) from which the midpoint rule is used
NEAR_FIELD_CUTOFF = 3.0
NEAR_RTOL = 1e-6


@dataclass(frozen=True)
class Kernel:
    """Fractional kernel in dimension ``n`` with order ``s`` in (0, 1/2)."""

    n: int
    s: float
    tail_policy: str = "halfspace_columns"

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not (0.0 < self.s < 0.5):
            raise ValueError(f"s must lie in (0, 1/2), got {self.s}")
        if self.tail_policy not in TAIL_POLICIES:
            raise ValueError(f"unknown tail policy {self.tail_policy!r}")

    @property
    def exponent(self) -> float:
        return self.n + 2 * self.s


def kernel_value(k: Kernel, d):
    """Return d^-(n+2s); ``d`` may be a scalar or an array of positive distances."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("kernel is singular at d <= 0")
    out = d ** (-k.exponent)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Cell-pair weights
# --------------------------------------------------------------------------

def _gl01(order):
    x, w = special.roots_legendre(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _tent_poly(z, d):
    """Product of tents prod_k (1 - |z_k - d_k|)_+ evaluated row-wise."""
    return np.prod(np.clip(1.0 - np.abs(z - d), 0.0, None), axis=-1)


def _box_tensor(k: Kernel, lo, hi, d, order):
    nodes, weights = _gl01(order)
    n = len(lo)
    pts = [lo[i] + (hi[i] - lo[i]) * nodes for i in range(n)]
    wts = [(hi[i] - lo[i]) * weights for i in range(n)]
    grids = np.meshgrid(*pts, indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.ones(1)
    for wi in wts:
        w = np.multiply.outer(w, wi).ravel()
    r = np.sqrt(np.sum(z * z, axis=-1))
    return float(np.sum(w * r ** (-k.exponent) * _tent_poly(z, d)))


def _box_duffy(k: Kernel, lo, hi, d, order):
    """Integral over a box having the origin as a vertex (Duffy pyramids).

    Along z = t q the tent product vanishes linearly at t = 0, so
    t^(-1-2s) * tent(t q) = t^(-2s) * poly(t); Gauss-Jacobi in t is exact.
    """
    n = len(lo)
    far = np.where(np.abs(hi) > np.abs(lo), hi, lo)
    xj, wj = special.roots_jacobi(n + 1, 0.0, -2.0 * k.s)
    t = 0.5 * (xj + 1.0)
    wt = wj * 2.0 ** (2.0 * k.s - 1.0)
    nodes, weights = _gl01(order)
    total = 0.0
    for j in range(n):
        others = [i for i in range(n) if i != j]
        grids = np.meshgrid(*[far[i] * nodes for i in others], indexing="ij")
        wq = np.ones(1)
        for i in others:
            wq = np.multiply.outer(wq, abs(far[i]) * weights).ravel()
        q = np.empty((wq.size, n))
        q[:, j] = far[j]
        for g, i in zip(grids, others):
            q[:, i] = g.ravel()
        qn = np.sqrt(np.sum(q * q, axis=-1))
        acc = np.zeros(wq.size)
        for tt, ww in zip(t, wt):
            acc += ww * _tent_poly(tt * q, d) / tt
        total += abs(far[j]) * float(np.sum(wq * qn ** (-k.exponent) * acc))
    return total


def _near_pair_unit(k: Kernel, d: tuple) -> float:
    d = np.asarray(d, dtype=float)
    n = k.n
    cuts = [np.array([d[i] - 1.0, d[i], d[i] + 1.0]) for i in range(n)]

    def evaluate(order):
        total = 0.0
        for idx in itertools.product(range(2), repeat=n):
            lo = np.array([cuts[i][idx[i]] for i in range(n)])
            hi = np.array([cuts[i][idx[i] + 1] for i in range(n)])
            at_origin = all(lo[i] == 0.0 or hi[i] == 0.0 for i in range(n))
            if at_origin:
                total += _box_duffy(k, lo, hi, d, order)
            else:
                total += _box_tensor(k, lo, hi, d, order)
        return total

    order = 8
    prev = evaluate(order)
    while True:
        order *= 2
        cur = evaluate(order)
        if abs(cur - prev) <= NEAR_RTOL * abs(cur) or order >= 128:
            return cur
        prev = cur


@lru_cache(maxsize=None)
def _pair_unit(n: int, s: float, offset: tuple) -> float:
    key = tuple(sorted(abs(int(o)) for o in offset))
    if key != tuple(offset):
        return _pair_unit(n, s, key)
    if not any(key):
        return 0.0
    dist = math.sqrt(sum(o * o for o in key))
    if dist >= NEAR_FIELD_CUTOFF:
        return dist ** (-(n + 2 * s))
    return _near_pair_unit(Kernel(n, s, "none"), key)


def cell_pair_weight(k: Kernel, a, b, h: float) -> float:
    """Approximate the double integral of the kernel over two cells of side ``h``.

    ``a`` and ``b`` are integer lattice indices of equal length ``n``.
    """
    if len(a) != k.n or len(b) != k.n:
        raise ValueError("cell indices must have n components")
    offset = tuple(int(bi) - int(ai) for ai, bi in zip(a, b))
    return h ** (k.n - 2 * k.s) * _pair_unit(k.n, k.s, offset)


def pair_weight_table(k: Kernel, extent, h: float = 1.0) -> np.ndarray:
    """Cell-pair weights for every offset with |offset_i| <= extent[i].

    Entry ``[extent[0] + i, extent[1] + j, ...]`` holds the weight for offset (i, j, ...).
    """
    axes = [np.arange(-e, e + 1) for e in extent]
    grids = np.meshgrid(*axes, indexing="ij")
    dist = np.sqrt(sum(g.astype(float) ** 2 for g in grids))
    with np.errstate(divide="ignore"):
        table = np.where(dist > 0, dist, np.inf) ** (-k.exponent)
    near = np.argwhere((dist < NEAR_FIELD_CUTOFF))
    for idx in near:
        off = tuple(int(idx[i] - extent[i]) for i in range(k.n))
        table[tuple(idx)] = _pair_unit(k.n, k.s, off)
    return table * h ** (k.n - 2 * k.s)


# --------------------------------------------------------------------------
# Point-to-cell weights with an excluded ball (n = 2)
# --------------------------------------------------------------------------

def _ray_box(c, lo, hi):
    """Entry/exit radii of rays from the origin with directions ``c`` (N, 2)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo / c
        t2 = hi / c
    tmin = np.where(c == 0, np.where((lo <= 0) & (hi >= 0), -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(c == 0, np.where((lo <= 0) & (hi >= 0), np.inf, -np.inf), np.maximum(t1, t2))
    return np.max(tmin, axis=1), np.min(tmax, axis=1)


def _point_box_unit(s: float, lo, hi, rho: float, order: int = 16) -> float:
    """Integral of |y|^-(2+2s) over the box [lo, hi] minus the disk of radius rho."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    corners = np.array([[x, y] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])])
    angles = list(np.arctan2(corners[:, 1], corners[:, 0]))
    for axis in range(2):
        other = 1 - axis
        for val in (lo[axis], hi[axis]):
            if abs(val) < rho:
                w = math.sqrt(rho * rho - val * val)
                for sgn in (-1.0, 1.0):
                    pt = [0.0, 0.0]
                    pt[axis] = val
                    pt[other] = sgn * w
                    if lo[other] <= pt[other] <= hi[other]:
                        angles.append(math.atan2(pt[1], pt[0]))
    angles = np.unique(np.mod(np.array(angles), 2 * math.pi))
    if angles.size < 2:
        return 0.0
    bounds = np.concatenate([angles, [angles[0] + 2 * math.pi]])
    nodes, weights = _gl01(order)
    total = 0.0
    for a0, a1 in zip(bounds[:-1], bounds[1:]):
        th = a0 + (a1 - a0) * nodes
        c = np.stack([np.cos(th), np.sin(th)], axis=1)
        r1, r2 = _ray_box(c, lo, hi)
        r1 = np.maximum(np.maximum(r1, rho), 0.0)
        valid = r2 > r1
        r2 = np.where(valid, r2, r1)
        with np.errstate(divide="ignore"):
            val = (r1 ** (-2 * s) - np.where(np.isinf(r2), 0.0, r2 ** (-2 * s))) / (2 * s)
        val = np.where(valid, val, 0.0)
        total += (a1 - a0) * float(np.sum(weights * val))
    return total


@lru_cache(maxsize=None)
def _point_cell_unit(s: float, dx: float, dy: float, rho: float) -> float:
    lo = (dx - 0.5, dy - 0.5)
    hi = (dx + 0.5, dy + 0.5)
    prev = _point_box_unit(s, lo, hi, rho, 16)
    cur = _point_box_unit(s, lo, hi, rho, 32)
    return cur if abs(cur - prev) <= 1e-9 * abs(cur) else _point_box_unit(s, lo, hi, rho, 128)


@lru_cache(maxsize=None)
def _point_table_unit(s: float, extent: tuple, face: tuple, rho: float) -> np.ndarray:
    ex, ey = extent
    fx, fy = face
    di = np.arange(-ex, ex + 1, dtype=float)[:, None]
    dj = np.arange(-ey, ey + 1, dtype=float)[None, :]
    # cell center offsets from the evaluation point (center + face / 2)
    x = di - 0.5 * fx
    y = dj - 0.5 * fy
    dist = np.sqrt(x * x + y * y)
    with np.errstate(divide="ignore"):
        # the zero-distance entry is near field and overwritten below
        table = dist ** (-(2 + 2 * s))
    near = np.argwhere(dist < rho + NEAR_FIELD_CUTOFF)
    for i, j in near:
        table[i, j] = _point_cell_unit(s, abs(float(x[i, 0])), abs(float(y[0, j])), rho)
    table.setflags(write=False)
    return table


def point_cell_table(k: Kernel, extent, face, rho_cells: float, h: float = 1.0) -> np.ndarray:
    """Kernel integrals from a face midpoint to every cell outside B_rho.

    The point sits at ``center + face * h / 2`` of the cell at offset 0;
    entry ``[ex + i, ey + j]`` is the weight of the cell at offset (i, j).
    """
    if k.n != 2:
        raise NotImplementedError("point-to-cell weights are implemented for n = 2")
    unit = _point_table_unit(float(k.s), tuple(int(e) for e in extent),
                             tuple(int(f) for f in face), float(rho_cells))
    return unit * h ** (-2 * k.s)


# --------------------------------------------------------------------------
# Tails beyond a box window (n = 2) and radial tails
# --------------------------------------------------------------------------

def _beta_full(s: float) -> float:
    return special.beta(0.5, s + 0.5)


def _column_tail(s: float, t):
    """G(t) = integral over tau > t of (1 + tau^2)^-(1+s)."""
    t = np.asarray(t, dtype=float)
    full = _beta_full(s)
    x = t * t / (1.0 + t * t)
    upper = 0.5 * full * (1.0 - special.betainc(0.5, s + 0.5, x))
    return np.where(t >= 0, upper, full - upper)


@lru_cache(maxsize=None)
def _quadrant(s: float, a: float, b: float) -> float:
    """Integral of |y|^-(2+2s) over {X > a, Y > b} with a > 0 (any real b)."""
    if a <= 0:
        raise ValueError("quadrant needs a > 0")
    if b == math.inf:
        return 0.0
    if b == -math.inf:
        return _beta_full(s) * a ** (-2 * s) / (2 * s)
    g0 = float(_column_tail(s, 0.0))
    beta = b / a

    def f(u):
        return math.exp(-2 * s * u) * (float(_column_tail(s, beta * math.exp(-u))) - g0)

    rest, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return a ** (-2 * s) * (g0 / (2 * s) + rest)


def _strip(s: float, x0: float, x1: float, b: float) -> float:
    """Integral over {x0 < X < x1, Y > b} with x0 < 0 < x1 and b > 0."""
    if b == math.inf:
        return 0.0
    half = 0.5 * _beta_full(s) * b ** (-2 * s) / (2 * s)
    return (half - _quadrant(s, x1, b)) + (half - _quadrant(s, -x0, b))


@lru_cache(maxsize=None)
def box_exterior_pieces(s: float, x0: float, x1: float, y0: float, y1: float,
                        c_left: float, c_right: float) -> dict:
    """Kernel integrals from the origin over the pieces of the plane outside a box.

    The box is [x0, x1] x [y0, y1] with the origin inside. Beyond it, the
    left and right half-planes are split at heights ``c_left``/``c_right``.
    Returned keys: above, below, left_below, left_above, right_below, right_above.
    """
    if not (x0 < 0 < x1 and y0 < 0 < y1):
        raise ValueError("origin must lie inside the box")
    return {
        "above": _strip(s, x0, x1, y1),
        "below": _strip(s, x0, x1, -y0),
        "left_below": _quadrant(s, -x0, -c_left),
        "left_above": _quadrant(s, -x0, c_left),
        "right_below": _quadrant(s, x1, -c_right),
        "right_above": _quadrant(s, x1, c_right),
    }


def radial_tail(k: Kernel, radius: float) -> float:
    """Integral of the kernel over the exterior of a ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    sphere = 2 * math.pi if k.n == 2 else 4 * math.pi
    return sphere * radius ** (-2 * k.s) / (2 * k.s)


@dataclass(frozen=True)
class TailResult:
    value: float
    diagnostics: tuple = ()


def tail_weight(k: Kernel, center, window) -> TailResult:
    """Kernel integral from ``center`` over everything outside ``window``.

    ``window`` is either a radius (float, ball centered at ``center``) or a box
    given as ((xmin, xmax), (ymin, ymax)) in length units (n = 2).
    """
    if k.tail_policy == "none":
        return TailResult(0.0, ("tails ignored",))
    if k.tail_policy == "radial" or np.isscalar(window):
        radius = float(window) if np.isscalar(window) else _inscribed_radius(center, window)
        return TailResult(radial_tail(k, radius))
    if k.n != 2:
        raise NotImplementedError("box tails are implemented for n = 2")
    (xa, xb), (ya, yb) = window
    cx, cy = center
    x0, x1, y0, y1 = xa - cx, xb - cx, ya - cy, yb - cy
    p = box_exterior_pieces(float(k.s), x0, x1, y0, y1, 0.0, 0.0)
    value = p["above"] + p["below"] + p["left_below"] + p["left_above"] \
        + p["right_below"] + p["right_above"]
    return TailResult(value)


def _inscribed_radius(center, window):
    return min(min(abs(c - lo), abs(hi - c)) for c, (lo, hi) in zip(center, window))
