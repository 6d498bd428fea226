"""Code design and link simulation for superposition multiple access.

Toolkit for serially concatenated LDPC + repetition coding over Gaussian
multiple-access channels with an iterative soft-interference-cancellation
receiver: analytical EXIT transfer functions, Gaussian-approximation density
evolution, LP-based degree-profile design, finite-length code construction,
and Monte-Carlo link simulation.
"""

__version__ = "0.1.0"

from .exit_engine import DegreeProfile, ExitCurve, MacScenario, regular_profile  # noqa: E402,F401
from .profile_optimizer import DesignResult, DesignSpec  # noqa: E402,F401
