"""Desk-scale numerical laboratory for the pressured Euler alignment system
on the periodic torus: hyperviscous regularized dynamics, the periodized
singular alignment kernel, energy/dissipation budgets, relative-energy
weak-strong stability checks, and empirical Young-measure diagnostics."""

__version__ = "1.0.0"

from .alignment import AlignmentForm
from .dynamics import SolverConfig, Trajectory, make_reference, run, step
from .fields import Grid, State
from .functionals import (gronwall_certificate, poincare_check,
                          quadratic_bound_check, relative_energy, total_energy)
from .kernel import (KernelConfig, PeriodizedKernel, build_kernel_table,
                     calibrate_constant, certify_kernel, lattice_kernel_value,
                     tail_bound)
from .measures import (EnsembleMeasure, collect_ensemble, compatibility_check,
                       dissipation_defect, moment, support_check, tensor_moment)

__all__ = [
    "AlignmentForm", "EnsembleMeasure", "Grid", "KernelConfig",
    "PeriodizedKernel", "SolverConfig", "State", "Trajectory",
    "build_kernel_table", "calibrate_constant", "certify_kernel",
    "collect_ensemble", "compatibility_check", "dissipation_defect",
    "gronwall_certificate", "lattice_kernel_value", "make_reference",
    "moment", "poincare_check", "quadratic_bound_check", "relative_energy",
    "run", "step", "support_check", "tail_bound", "tensor_moment",
    "total_energy",
]
