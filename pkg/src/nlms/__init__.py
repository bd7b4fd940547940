"""Lattice toolkit for s-minimal sets in cylinders with exterior graph data."""

from .kernel import Kernel, cell_pair_weight, kernel_value, tail_weight
from .geometry import (CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor,
                       region_cells, subconvolve, supconvolve, translate)
from .energy import EnergyValue, energy_delta, interaction, s_perimeter
from .curvature import CurvatureSample, nmc, supconvolution_inequality_check
from .solver import (FlowNetwork, Problem, build_cut_graph, minimize_descent, minimize_exact,
                     slide_contact)

__all__ = [
    "Kernel", "kernel_value", "cell_pair_weight", "tail_weight",
    "GridDescriptor", "CylinderDomain", "ExteriorGraphData", "CellSet",
    "supconvolve", "subconvolve", "translate", "region_cells",
    "EnergyValue", "interaction", "s_perimeter", "energy_delta",
    "CurvatureSample", "nmc", "supconvolution_inequality_check",
    "Problem", "FlowNetwork", "build_cut_graph", "minimize_exact", "minimize_descent",
    "slide_contact",
]
