class MiregError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateConfiguration(MiregError, ValueError):
    """Correspondences do not determine a unique rigid transform."""


class ConvergenceFailure(MiregError, RuntimeError):
    pass


class InfeasibleConfig(MiregError, ValueError):
    pass


class NotNormalized(MiregError, ValueError):
    pass


class ShapeMismatch(MiregError, ValueError):
    pass


class NoPositiveAvailable(MiregError, ValueError):
    pass


class TooFewPoints(MiregError, ValueError):
    pass


class NoValidModel(MiregError, RuntimeError):
    """Every RANSAC sample was degenerate."""


class EmptyBenchmark(MiregError, ValueError):
    pass


class MissingModel(MiregError, FileNotFoundError):
    pass
