"""Sparse AC false data injection attacks on power-system state estimation."""

from .acpf import VoltageState, newton_power_flow
from .attack_vector import AttackVector, MeasurementId, assemble
from .netmodel import Network, bundled_case_path, load_case, parse_case, zero_injection_buses
from .sparse_attack import SolverConfig, inner_feasibility, solve_arbitrary, solve_sparse
from .stealth import generate_measurements, stealth_check, wls_estimate
from .zone import AttackZone, build_zone

__all__ = [
    "AttackVector", "AttackZone", "MeasurementId", "Network", "SolverConfig", "VoltageState",
    "assemble", "build_zone", "bundled_case_path", "generate_measurements", "inner_feasibility",
    "load_case", "newton_power_flow", "parse_case", "solve_arbitrary", "solve_sparse",
    "stealth_check", "wls_estimate", "zero_injection_buses",
]
