"""Exception types shared across the package."""


class MetaCollocError(Exception):
    """Base class for all package errors."""


class InvalidInput(MetaCollocError, ValueError):
    pass


class InvalidConfig(MetaCollocError, ValueError):
    pass


class RankDeficient(MetaCollocError):
    pass


class IncompatibleCheckpoint(MetaCollocError):
    pass


class CorruptCheckpoint(MetaCollocError):
    pass


class UnknownProblem(MetaCollocError, KeyError):
    pass


class AssemblyError(MetaCollocError):
    pass


class DivergedSolve(MetaCollocError):
    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class TrainingDiverged(MetaCollocError):
    def __init__(self, message, epoch, task_index, seed):
        super().__init__(message)
        self.epoch = epoch
        self.task_index = task_index
        self.seed = seed


class ConfigError(MetaCollocError):
    pass
