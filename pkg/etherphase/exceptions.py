from typing import Optional

import numpy as np


class EtherPhaseException(Exception):
    pass


class DomainException(EtherPhaseException):
    pass


class NumericException(EtherPhaseException):
    def __init__(self, message: str, last_point: Optional[np.ndarray] = None) -> None:
        super().__init__(message)
        self.last_point = last_point


class IterationLimitException(NumericException):
    def __init__(
        self,
        message: str,
        residual: float,
        iterations: int,
        last_point: Optional[np.ndarray] = None,
    ) -> None:
        super().__init__(message, last_point)
        self.residual = residual
        self.iterations = iterations


class ConditioningException(NumericException):
    pass


class StageException(NumericException):
    """
    A solver stage failed. `stage` names the construction step, the original
    solver exception is chained as `__cause__`.
    """

    def __init__(self, message: str, stage: str, last_point: Optional[np.ndarray] = None) -> None:
        super().__init__(f"{stage}: {message}", last_point)
        self.stage = stage


class AmbiguityException(EtherPhaseException):
    pass


class ComposabilityException(EtherPhaseException):
    pass


class ParameterException(EtherPhaseException):
    pass


class InvalidFixtureException(EtherPhaseException):
    pass


class InvalidConfigException(EtherPhaseException):
    pass
