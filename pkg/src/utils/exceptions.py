"""Exception types raised by the lab.

Numerical failures share the ``NumericalFailure`` base so the CLI can map
them to a single exit code; configuration problems are ``ConfigError``.
"""


class SnakeLabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigError(SnakeLabError, ValueError):
    """A configuration file or parameter set is invalid."""


class NumericalFailure(SnakeLabError):
    """A simulation, filter or learner step could not be completed."""


class InvalidControl(NumericalFailure):
    """A friction perturbation would make a normal friction coefficient negative."""


class SingularFrictionBlock(NumericalFailure):
    """The 3x3 friction block of the quasi-static group closure is singular."""


class NonFinite(NumericalFailure):
    """A state component left the finite range."""


class NoLimitCycle(NumericalFailure):
    """The open-loop gait did not settle onto a closed orbit."""


class NonConvexHamiltonian(NumericalFailure):
    """A quadratic control weight lost positivity, so the Hamiltonian has no minimizer."""


class IllConditionedGain(UserWarning):
    """The Galerkin normal matrix was regularized before solving."""
