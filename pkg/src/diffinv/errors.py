"""Exception types shared across the package."""


class NumericsError(RuntimeError):
    """A computation failed numerically (negative variance, overflow, ...).

    Distinct from ValueError so callers can map bad invocations and numeric
    failures to different exit codes.
    """


class DivergenceError(NumericsError):
    """A fixed-point iteration produced a non-finite iterate."""

    def __init__(self, step_t: int, iteration: int):
        self.step_t = step_t
        self.iteration = iteration
        super().__init__(
            f"fixed-point iteration diverged at step t={step_t}, iteration {iteration}: "
            "non-finite iterate"
        )
