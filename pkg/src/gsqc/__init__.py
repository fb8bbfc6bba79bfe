"""Ground-state quantum computer simulation: circuits, Hamiltonians, gaps."""

from .circuit_model import (
    BoundarySpec,
    CircuitBuilder,
    CircuitError,
    CircuitGraph,
    CnotLink,
    FilterBox,
    QubitColumn,
    chain_filters,
    compact_rows,
    filter_circuit,
    insert_teleportation,
    load_circuit,
    validate,
)
from .gap_rules import GapEstimate, filter_gap_formula, fit_power_law, predict_gap
from .hamiltonian import DimensionError, SparseHermitian, assemble, reachable_sector
from .sat_frontend import ExactCoverInstance, OracleLedger, brute_force, choose_lambda, parse_instance
from .solver import GroundStateResult, SolverError, final_row_readout, history_state, lowest_two, solve_circuit

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "CircuitBuilder",
    "CircuitError",
    "CircuitGraph",
    "CnotLink",
    "DimensionError",
    "ExactCoverInstance",
    "FilterBox",
    "GapEstimate",
    "GroundStateResult",
    "OracleLedger",
    "QubitColumn",
    "SolverError",
    "SparseHermitian",
    "assemble",
    "brute_force",
    "chain_filters",
    "choose_lambda",
    "compact_rows",
    "filter_circuit",
    "filter_gap_formula",
    "final_row_readout",
    "fit_power_law",
    "history_state",
    "insert_teleportation",
    "load_circuit",
    "lowest_two",
    "parse_instance",
    "predict_gap",
    "reachable_sector",
    "solve_circuit",
    "validate",
]
