"""
Exception hierarchy of hypolab.

Every error raised on purpose by the library derives from HypolabError. The CLI maps each class to an exit code through the 'exit_code' class attribute; verdict-like outcomes (an infeasible check, an inapplicable bound) are never raised, they are returned as data.
"""


class HypolabError(Exception):
    """
    Base class of all hypolab errors.
    """
    exit_code = 3


class ConfigError(HypolabError, ValueError):
    """
    Invalid experiment declaration (unknown builtin, non-finite number, wrong type, ...).
    """
    exit_code = 2


class ModelEvaluationError(HypolabError):
    """
    A kernel or potential evaluator returned a non-finite value.
    """
    def __init__(self, message, point=None):
        """
        Args:
            message (str): Description of the failure.
            point (tuple or array): Phase point where the evaluation failed.
        """
        self.point = point
        if point is not None:
            message = f'{message} at point {point}'
        super().__init__(message)


class SingularMetricError(HypolabError, ValueError):
    """
    The metric block aa^T + zz^T is singular, which happens exactly when z1 = 0.
    """


class GridError(HypolabError, ValueError):
    """
    Empty or otherwise unusable grid.
    """


class ConvergenceError(HypolabError):
    """
    An iterative method exhausted its iteration budget.
    """
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f'{message} (residual={residual}, iterations={iterations})')


class InstabilityError(HypolabError):
    """
    A time integrator produced a non-finite state or a negative mass.
    """
    def __init__(self, message, substep=None, time=None):
        """
        Args:
            message (str): Description of the failure.
            substep (str): Name of the substep that produced the bad state.
            time (float): Simulation time at which the failure was detected.
        """
        self.substep = substep
        self.time = time
        details = ', '.join(f'{name}={value}' for name, value in (('substep', substep), ('t', time))
                            if value is not None)
        super().__init__(f'{message} ({details})' if details else message)


class DensityDomainError(HypolabError, ValueError):
    """
    A density with negative entries was passed to a functional defined on nonnegative densities.
    """
