from . import adaptive, nonadaptive, single_shot
from .adaptive import feedforward_protocol, optimize_adaptive_global
from .nonadaptive import optimize_global_nonadaptive, optimize_local_nonadaptive, shots_to_target
from .single_shot import (
    find_regime_boundary,
    noon_gaussian_gap,
    optimal_gaussian_rho,
    optimize_gamma,
    optimize_single_shot,
)

STRATEGIES = {s.id: s for module in (single_shot, nonadaptive, adaptive) for s in module.STRATEGIES}

__all__ = [
    "STRATEGIES",
    "feedforward_protocol",
    "find_regime_boundary",
    "noon_gaussian_gap",
    "optimal_gaussian_rho",
    "optimize_adaptive_global",
    "optimize_gamma",
    "optimize_global_nonadaptive",
    "optimize_local_nonadaptive",
    "optimize_single_shot",
    "shots_to_target",
]
