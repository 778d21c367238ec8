"""Exact belief-space planning for deterministic POMDPs."""

from .analysis import (
    BoundsReport,
    SeparationVerdict,
    bound_detpomdp,
    bound_littman,
    bound_separated,
    check_separated_dpomdp,
    stable_set,
    verify_bounds,
)
from .filtering import belief_step, step_mapping
from .measure import CEMETERY, CEMETERY_BELIEF, Belief, Measure, StepMapping, make_belief
from .model import (
    PRESETS,
    DetPomdpModel,
    TankParams,
    gen_random,
    gen_tank,
    gen_tight_bound,
    load_model,
    save_model,
    validate_model,
)
from .reachability import CapExceeded, mapping_closure, reachable_layers, reachable_union
from .solver import Solution, brute_force_value, simulate, solve

__version__ = "0.1.0"

__all__ = [
    "Belief", "BoundsReport", "CEMETERY", "CEMETERY_BELIEF", "CapExceeded", "DetPomdpModel",
    "Measure", "PRESETS", "SeparationVerdict", "Solution", "StepMapping", "TankParams",
    "belief_step", "bound_detpomdp", "bound_littman", "bound_separated", "brute_force_value",
    "check_separated_dpomdp", "gen_random", "gen_tank", "gen_tight_bound", "load_model",
    "make_belief", "mapping_closure", "reachable_layers", "reachable_union", "save_model",
    "simulate", "solve", "stable_set", "step_mapping", "validate_model", "verify_bounds",
]
