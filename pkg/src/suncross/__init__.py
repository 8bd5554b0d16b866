"""Sun-star perturbation tools for linear and nonlinear delay equations.

The package computes spectra, spectral projectors and exponential
trichotomies of retarded equations, checks admissibility of sun-star
forcings numerically, and constructs center manifolds by the cut-off fixed
point method.
"""

__version__ = "0.1.0"

from .checks import Check  # noqa: E402
from .errors import AnalysisError, ConfigError, SuiteFailure, SuncrossError  # noqa: E402
from .systems import LinearDDE, NonlinearDDE  # noqa: E402

__all__ = ["Check", "AnalysisError", "ConfigError", "SuiteFailure", "SuncrossError", "LinearDDE", "NonlinearDDE",
           "__version__"]
