import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import halfspace, noisy_halfspace, random_blob
from oracles import trap_area
from nlms import (CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor, region_cells,
                  subconvolve, supconvolve, translate)
from nlms.geometry import discrete_ball, region_mask


def _ext(E, pad=4):
    return E.extended(pad, pad)


def _single_cell(g, r, c):
    bits = np.zeros(g.shape, bool)
    bits[r, c] = True
    inf = -math.inf
    return CellSet(g, bits, np.full(g.nx, inf), inf, inf, np.zeros(g.nx, bool))


# -- grid and domain ------------------------------------------------------------

def test_grid_centres_and_rows_below():
    g = GridDescriptor(0.25, 8, 6)
    np.testing.assert_allclose(g.col_centers(), np.arange(8) * 0.25 - 0.875)
    assert g.half_height == 0.75
    assert list(g.rows_below([-0.75, 0.0, 0.1, 0.2, 10.0])) == [0, 3, 3, 4, 43]


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        GridDescriptor(0.0, 4, 4)


def test_domain_merges_and_reports_radius():
    dom = CylinderDomain(((0.5, 1.0), (-1.0, 0.0), (0.8, 1.5)))
    assert dom.intervals == ((-1.0, 0.0), (0.5, 1.5))
    assert dom.R_o == 1.5
    assert list(dom.contains([-1.0, -0.5, 0.0, 0.6])) == [False, True, False, True]


def test_closure_cannot_be_broken():
    g = GridDescriptor(1.0, 4, 4)
    E = CellSet.subgraph(g, [2, 2, 2, 2], frozen=np.array([True, False, False, True]))
    bits = np.array(E.bits)
    bits[3, 0] = True
    with pytest.raises(ValueError, match="exterior columns"):
        E.with_bits(bits)
    with pytest.raises(ValueError):
        E.bits[0, 0] = False


def test_from_problem_follows_u_outside_omega():
    g = GridDescriptor(0.25, 8, 8)
    u = np.linspace(-0.5, 0.5, 8)
    dom = CylinderDomain(((-0.5, 0.5),))
    E = CellSet.from_problem(g, dom, ExteriorGraphData(u))
    for c in np.nonzero(~dom.contains(g.col_centers()))[0]:
        assert E.bits[:, c].sum() == g.rows_below(u[c])
    assert E.member(-100, -5) and not E.member(100, 20)


# -- morphology ------------------------------------------------------------------

def test_delta_zero_is_identity():
    E = halfspace(GridDescriptor(0.5, 10, 10))
    assert supconvolve(E, 0.0) == E and subconvolve(E, 0.0) == E


def test_single_cell_dilates_to_13_cell_ball():
    g = GridDescriptor(1.0, 11, 11)
    F = supconvolve(_single_cell(g, 5, 5), 2.0)
    assert F.bits.sum() == 13
    assert discrete_ball(2).sum() == 13


def test_negative_delta_rejected():
    E = halfspace(GridDescriptor(1.0, 8, 8))
    with pytest.raises(ValueError):
        supconvolve(E, -1.0)
    with pytest.raises(ValueError):
        subconvolve(E, -1.0)


def test_delta_rounds_up_to_lattice():
    E = halfspace(GridDescriptor(0.5, 12, 12))
    F = supconvolve(E, 0.6)
    assert F.diagnostics["delta"] == 1.0
    assert F == supconvolve(E, 1.0)


def test_halfspace_erosion():
    g = GridDescriptor(1.0, 16, 16)
    for k in (1, 2, 3):
        np.testing.assert_array_equal(_ext(subconvolve(halfspace(g), k)),
                                      _ext(halfspace(g, 8 - k)))


def test_morphology_identities_on_random_sets():
    rng = np.random.default_rng(7)
    g = GridDescriptor(1 / 32, 32, 32)
    for i in range(50):
        E = random_blob(rng, g) if i % 2 else noisy_halfspace(rng, g)
        rc = 2
        union = np.zeros((g.ny + 8, g.nx + 8), bool)
        for dr, dc in np.argwhere(discrete_ball(rc)) - rc:
            union |= _ext(translate(E, (dc, dr)))
        np.testing.assert_array_equal(union, _ext(supconvolve(E, rc * g.h)))
        dual = supconvolve(E.complement(), rc * g.h).complement()
        np.testing.assert_array_equal(_ext(dual), _ext(subconvolve(E, rc * g.h)))


@st.composite
def blobs(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    kind = draw(st.sampled_from(["blob", "noisy"]))
    rng = np.random.default_rng(seed)
    g = GridDescriptor(1.0, 24, 24)
    return random_blob(rng, g) if kind == "blob" else noisy_halfspace(rng, g)


@given(E=blobs(), k=st.integers(0, 3))
@settings(max_examples=40, deadline=None)
def test_extensive_and_closing(E, k):
    big, small = _ext(supconvolve(E, k)), _ext(subconvolve(E, k))
    base = _ext(E)
    assert np.all(base <= big) and np.all(small <= base)
    assert np.all(base <= _ext(subconvolve(supconvolve(E, k), k)))


@given(E=blobs(), k=st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_monotone(E, k):
    F = supconvolve(E, 1.0)  # F contains E
    assert np.all(_ext(supconvolve(E, k)) <= _ext(supconvolve(F, k)))
    assert np.all(_ext(subconvolve(E, k)) <= _ext(subconvolve(F, k)))


@given(E=blobs(), dc=st.integers(-2, 2), dr=st.integers(-2, 2))
@settings(max_examples=30, deadline=None)
def test_translation_equivariance(E, dc, dr):
    a = supconvolve(translate(E, (dc, dr)), 2.0)
    b = translate(supconvolve(E, 2.0), (dc, dr))
    np.testing.assert_array_equal(a.bits[4:-4, 4:-4], b.bits[4:-4, 4:-4])


# -- translation -----------------------------------------------------------------

def test_translate_identities():
    g = GridDescriptor(1.0, 10, 12)
    E = halfspace(g, 5)
    assert translate(E, (0, 0)) == E
    np.testing.assert_array_equal(_ext(translate(E, (0, 3))), _ext(halfspace(g, 8)))
    assert translate(translate(E, (0, 1)), (0, 1)) == translate(E, (0, 2))


def test_translate_round_trip_inside_window():
    rng = np.random.default_rng(3)
    g = GridDescriptor(1.0, 24, 24)
    E = random_blob(rng, g, margin=5)
    back = translate(translate(E, (3, -2)), (-3, 2))
    np.testing.assert_array_equal(back.bits, E.bits)


# -- regions ----------------------------------------------------------------------

def test_region_omega_and_shrinking():
    g = GridDescriptor(0.25, 16, 4)
    dom = CylinderDomain(((-1.0, 1.0),))
    omega = region_mask(dom, g, "Omega")
    assert omega[0].sum() == 8
    shrunk = region_mask(dom, g, "Omega_eta", eta=2 * g.h)
    assert shrunk[0].sum() == 8 - 4
    assert np.all(shrunk <= omega)


def test_region_D_is_union_of_pieces():
    g = GridDescriptor(0.125, 48, 8)
    dom = CylinderDomain(((-1.0, 1.0),))
    D = region_mask(dom, g, "D_R_eta", R=2.0, eta=0.25)
    inner = region_mask(dom, g, "Omega_eta", eta=0.5)
    outside = region_mask(dom, g, "C_R", R=2.0) & ~region_mask(dom, g, "Omega")
    np.testing.assert_array_equal(D, inner | outside)


def test_region_cells_row_major_and_empty():
    g = GridDescriptor(0.25, 8, 8)
    dom = CylinderDomain(((-1.0, 1.0),))
    cells = region_cells(dom, g, "C_R", R=0.3)
    assert list(cells) == sorted(cells)
    assert region_cells(dom, g, "P_trap", R=1.0, lam=1e-3).size == 0
    with pytest.raises(ValueError):
        region_cells(dom, g, "nowhere")


def test_trap_region_area():
    h = 1 / 64
    g = GridDescriptor(h, 256, 256)
    count = region_cells(CylinderDomain(((-1.0, 1.0),)), g, "P_trap", R=1.0, lam=0.5).size
    # the region is symmetric in both x' and x_n, so its area is 4 times the quadrant integral
    assert count * h * h == pytest.approx(trap_area(1.0, 0.5), rel=3e-2)
