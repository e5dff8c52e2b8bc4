"""Coupling, renewal and correlation-bound toolkit for chains with complete connections."""
__version__ = "0.1.0"

from .errors import BoundViolation, BudgetError, ConfigError, MixlabError, NumericalError  # noqa: E402
from .sequences import *  # noqa: E402,F401,F403
from .potential import *  # noqa: E402,F401,F403
from .renewal import *  # noqa: E402,F401,F403
from .chain import *  # noqa: E402,F401,F403
from .coupling import *  # noqa: E402,F401,F403
from .bounds import *  # noqa: E402,F401,F403

from . import bounds, chain, coupling, potential, renewal, sequences  # noqa: E402

__all__ = (
    ["BoundViolation", "BudgetError", "ConfigError", "MixlabError", "NumericalError"]
    + sequences.__all__ + potential.__all__ + renewal.__all__
    + chain.__all__ + coupling.__all__ + bounds.__all__
)
