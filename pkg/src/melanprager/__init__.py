"""Projection time stepping for dynamic elasto-plasticity with Kelvin-Voigt
viscosity and linear kinematic hardening.

Each step solves a linear viscoelastic velocity problem for a trial stress
and then returns it cellwise onto the translated yield set in closed form.
"""
from .constitutive import ReturnMapResult, check_vi, plastic_excess, project, return_map
from .fem import DofMap
from .mesh import DIRICHLET, TRACTION, Mesh, MeshError, load_mesh, save_mesh, unit_square_mesh, write_vtk
from .monitor import EnergyLedger, aggregate, difference_energy, record_step, telescoped
from .scenario import (
    ConvergenceTable,
    MaterialPointResult,
    RunResult,
    Scenario,
    ScenarioError,
    compare_runs,
    converge,
    load_scenario,
    material_point,
    resolve_scenario,
    run,
    save_scenario,
    yield_events,
)
from .step import ConstraintViolation, ConvergenceError, State, StepData, Stepper, cg_solve
from .tensor import MaterialParams, apply_C, apply_S, deviator, norm, pack, trace, unpack

__version__ = "0.1.0"
