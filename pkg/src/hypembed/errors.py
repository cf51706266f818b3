"""Error taxonomy shared by the solvers and the command line driver.

HypothesisError marks violated mathematical preconditions (the run asked for
something outside the theory's hypotheses); NumericalError marks genuine
numerical failure.  The CLI maps them to distinct exit codes.
"""


class HypothesisError(ValueError):
    """A mathematical hypothesis of the method is violated."""


class NumericalError(RuntimeError):
    """A solver failed to converge or produced invalid numbers."""
