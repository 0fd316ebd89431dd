"""Exception hierarchy.

Every error belongs to one of four families; the CLI maps the family to its
exit status.
"""


class CtxferError(Exception):
    exit_code = 1


class ConfigError(CtxferError, ValueError):
    exit_code = 2


class DataError(CtxferError):
    exit_code = 3


class TrainingError(CtxferError):
    exit_code = 4


class IoError(CtxferError, OSError):
    exit_code = 5


# dataset / augmentation
class MissingClassDirectory(DataError):
    pass


class EmptyClass(DataError):
    pass


class DecodeError(DataError):
    pass


class DegenerateSplit(DataError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


class SingularTransform(DataError, ValueError):
    pass


# model
class UnknownNode(ConfigError):
    def __init__(self, node, valid):
        self.node = node
        self.valid = list(valid)
        super().__init__(
            f"unknown truncation node {node!r}; valid nodes: {', '.join(self.valid)}"
        )


class WeightsMismatch(ConfigError):
    pass


class ShapeMismatch(TrainingError, ValueError):
    pass


# training / metrics / report
class NonFiniteGradient(TrainingError, FloatingPointError):
    pass


class NonFiniteLoss(TrainingError, FloatingPointError):
    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run


class EmptyEvaluation(TrainingError, ValueError):
    pass


class InsufficientHistory(TrainingError, ValueError):
    pass
