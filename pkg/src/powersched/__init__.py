"""Joint power control and time division for dense wireless networks.

Branch-and-bound over per-link rate vectors under power caps and a
carrier-sense threshold, a history-weighted slot scheduler on top of it, and
a hexagonal-grid experiment harness.
"""

from .bnb import CutPool, SolverResult, solve, utopia_point
from .feasibility import PowerSolution, solve_powers, verify
from .rate_model import RateCurve, UtilityConfig
from .scheduler import ScheduleState, SolverConfig, compute_weights
from .topology import NetworkInstance, NodePlacement, build_instance, hex7_placement

__all__ = [
    "CutPool",
    "NetworkInstance",
    "NodePlacement",
    "PowerSolution",
    "RateCurve",
    "ScheduleState",
    "SolverConfig",
    "SolverResult",
    "UtilityConfig",
    "build_instance",
    "compute_weights",
    "hex7_placement",
    "solve",
    "solve_powers",
    "utopia_point",
    "verify",
]

__version__ = "0.1.0"
