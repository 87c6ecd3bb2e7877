from .family_a import FamilyAConfig, run_family_a
from .family_b import FamilyBConfig, run_family_b
from .family_c import AgentFlags, FamilyCConfig, run_family_c
from .family_d import Constraint, FamilyDConfig, RoleMode, run_family_d
from .records import (
    RunRecord,
    STATUS_BUDGET_EXHAUSTED,
    STATUS_COMPLETED,
    STATUS_FAILED,
)

ENV_CONFIGS = {
    "A": FamilyAConfig,
    "B": FamilyBConfig,
    "C": FamilyCConfig,
    "D": FamilyDConfig,
}

__all__ = [
    "AgentFlags",
    "Constraint",
    "ENV_CONFIGS",
    "FamilyAConfig",
    "FamilyBConfig",
    "FamilyCConfig",
    "FamilyDConfig",
    "RoleMode",
    "RunRecord",
    "STATUS_BUDGET_EXHAUSTED",
    "STATUS_COMPLETED",
    "STATUS_FAILED",
    "run_family_a",
    "run_family_b",
    "run_family_c",
    "run_family_d",
]
