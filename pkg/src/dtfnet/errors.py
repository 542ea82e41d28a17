"""Exception hierarchy shared by every module in the package."""


class DTFError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(DTFError, ValueError):
    pass


class InvalidPermutation(DTFError, ValueError):
    pass


class EmptySignal(DTFError, ValueError):
    pass


class SpectrumSizeMismatch(DTFError, ValueError):
    pass


class NonScalarLoss(DTFError, ValueError):
    pass


class DetachedNode(DTFError, ValueError):
    pass


class NonFiniteValue(DTFError, FloatingPointError):
    pass


class LabelOutOfRange(DTFError, ValueError):
    pass


class EvenKernel(DTFError, ValueError):
    pass


class GroupMismatch(DTFError, ValueError):
    pass


class InvalidConfig(DTFError, ValueError):
    pass


class InvalidClass(DTFError, ValueError):
    pass


class CheckpointCorrupt(DTFError, IOError):
    pass


class VariantMismatch(DTFError, ValueError):
    pass


class ConfigError(DTFError, ValueError):
    pass


class OutOfRange(DTFError, ValueError):
    pass
