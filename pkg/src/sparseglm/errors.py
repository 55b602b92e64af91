"""Exception hierarchy shared by all modules."""


class SparseGLMError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(SparseGLMError, ValueError):
    """An argument lies outside the documented domain."""


class EvaluationError(SparseGLMError, ArithmeticError):
    """A quadrature integrand returned a non-finite value.

    Attributes
    ----------
    node : object
        Abscissa (or tuple of abscissas) at which the value was non-finite.
    """

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class UnsupportedChannelError(SparseGLMError, ValueError):
    """Requested configuration of the output channel is not supported."""


class RegimeError(SparseGLMError, ValueError):
    """The sparsity or side-information regime is outside its validity range."""


class InfiniteThresholdError(SparseGLMError, ArithmeticError):
    """The channel carries no information, so the threshold is infinite."""


class CriticalGammaError(SparseGLMError, ArithmeticError):
    """The limiting variational problem has several minimizers.

    Attributes
    ----------
    candidates : tuple of float
        MMSE plateau values attached to every tied minimizer.
    """

    def __init__(self, message: str, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)
