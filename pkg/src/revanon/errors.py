"""Exception categories. The CLI maps each one to its own exit code."""


class RevAnonError(Exception):
    exit_code = 1


class InvalidArgument(RevAnonError, ValueError):
    exit_code = 2


class FormatError(RevAnonError, ValueError):
    exit_code = 3


class TrainingDivergence(RevAnonError, RuntimeError):
    exit_code = 4


class CheckpointError(RevAnonError, RuntimeError):
    exit_code = 5
