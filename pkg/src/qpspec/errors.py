"""Exception types raised across the package."""


class QpspecError(Exception):
    """Base class for all library errors."""


class RationalInput(QpspecError):
    pass


class PrecisionExhausted(QpspecError):
    pass


class InvalidRational(QpspecError):
    pass


class NonConvergence(QpspecError):
    pass


class AmbiguousLabel(QpspecError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class UnlabeledGaps(QpspecError):
    pass


class InsufficientSamples(QpspecError):
    pass


class DegenerateWindow(QpspecError):
    pass


class H3Violated(QpspecError):
    pass


class DivergenceRisk(QpspecError):
    pass


class SmallDivisor(QpspecError):
    def __init__(self, n, divisor):
        super().__init__(f"small divisor at mode n={n}: |e^(2 pi i n alpha) - 1| = {divisor:.3e}")
        self.n = n
        self.divisor = divisor


class SmallnessViolated(QpspecError):
    def __init__(self, message, which=None, state=None):
        super().__init__(message)
        self.which = which
        self.state = state


class MaxInnerIterations(QpspecError):
    pass


class MaxSteps(QpspecError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NotAGapEdge(QpspecError):
    pass


class InvalidPotential(QpspecError):
    pass


class InvalidKappa(QpspecError):
    pass


class InvalidZeta(QpspecError):
    pass


class Delocalized(QpspecError):
    pass


class ConfigError(QpspecError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
