"""Energy eigenstates of one-dimensional Schrodinger operators from periodic
orbits and chords of a time-dependent harmonic Hamiltonian, with
Conley-Zehnder indices and a discretised Rabinowitz action functional."""

from .core import EigenstateProfile, HamiltonianParams, PhasePoint, PotentialSpec, Trajectory, \
    emit_potential, evaluate_potential, parse_potential, positivity_margin
from .dynamics import LinearFlowPath, integrate_trajectory, linearized_flow, monodromy
from .czindex import cz_index, track_angles
from .ring import RingSolution, solve_ring
from .box import BoxSolution, solve_box
from .action import DiscretizedLoop, action_value, newton_refine
from .verify import schrodinger_residual

__all__ = [
    "EigenstateProfile", "HamiltonianParams", "PhasePoint", "PotentialSpec", "Trajectory",
    "emit_potential", "evaluate_potential", "parse_potential", "positivity_margin",
    "LinearFlowPath", "integrate_trajectory", "linearized_flow", "monodromy",
    "cz_index", "track_angles", "RingSolution", "solve_ring", "BoxSolution", "solve_box",
    "DiscretizedLoop", "action_value", "newton_refine", "schrodinger_residual",
]
