"""Locking-free poroelasticity solvers with inexact block preconditioning."""

from .assembly import AssembledBlocks, PhysicalParams, assemble_blocks, assemble_rhs
from .mesh import (Mesh, build_structured_simplicial, check_connected,
                   element_geometry, write_vtk)
from .problems import (ManufacturedSolution, ScenarioSpec, layered_strip_params,
                       layered_strip_scenario, make_scenario, zero_scenario)
from .spaces import DofMap, dirichlet_constraints, update_lift
from .system import (RegularizationSpec, ThreeFieldSystem, build_regularizer,
                     build_three_field, build_two_field, recover_fields,
                     solve_two_field)

__all__ = [
    "AssembledBlocks", "PhysicalParams", "assemble_blocks", "assemble_rhs",
    "Mesh", "build_structured_simplicial", "check_connected",
    "element_geometry", "write_vtk",
    "ManufacturedSolution", "ScenarioSpec", "layered_strip_params",
    "layered_strip_scenario", "make_scenario", "zero_scenario",
    "DofMap", "dirichlet_constraints", "update_lift",
    "RegularizationSpec", "ThreeFieldSystem", "build_regularizer",
    "build_three_field", "build_two_field", "recover_fields",
    "solve_two_field",
]

__version__ = "0.1.0"
