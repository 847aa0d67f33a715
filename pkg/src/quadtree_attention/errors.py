"""Exception types shared across the library.

All of these derive from ValueError (or RuntimeError for training failures)
so callers that only care about "bad input" can catch one base class, while
the CLI maps them onto its usage/config exit code.
"""


class DimensionError(ValueError):
    """Shapes or dtypes of the operands do not line up; names both sides."""


class DivisibilityError(ValueError):
    """A grid extent is not divisible as required; names the offending extent."""


class ContractError(ValueError):
    """A documented precondition was violated (bad config value, non-scalar
    backward root, empty candidate list, out-of-range index, ...)."""


class TensorFileError(ValueError):
    """A tensor file is malformed. Carries the path and the byte offset of
    the first inconsistency."""

    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = int(offset)
        self.reason = reason
        super().__init__(f"{self.path}: byte {self.offset}: {reason}")


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite. Carries the step index."""

    def __init__(self, step, value):
        self.step = int(step)
        super().__init__(f"non-finite loss ({value!r}) at step {step}")
