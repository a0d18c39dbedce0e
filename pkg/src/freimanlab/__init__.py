"""Exact desk-scale experiments on sets of small doubling in solvable groups."""
from .errors import (BudgetExceeded, ConfigError, FreimanError, MixedGroupError,
                     UndefinedProjection, VerificationFailure, WindowOverflow)
from .groups import (UT3, FiniteAbelian, Group, Heisenberg, IntegerLattice, Integers,
                     Lamplighter, PeriodicLamplighter)
from .setcalc import GroupSet

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded", "ConfigError", "FreimanError", "MixedGroupError", "UndefinedProjection",
    "VerificationFailure", "WindowOverflow", "UT3", "FiniteAbelian", "Group", "Heisenberg",
    "IntegerLattice", "Integers", "Lamplighter", "PeriodicLamplighter", "GroupSet",
]
