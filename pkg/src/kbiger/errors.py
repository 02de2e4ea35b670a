"""Exception hierarchy. The CLI maps these onto exit codes."""


class KBIGERError(Exception):
    pass


class InvalidArgumentError(KBIGERError, ValueError):
    pass


class InvalidStateError(KBIGERError, RuntimeError):
    pass


class ConfigError(KBIGERError, ValueError):
    pass


class DataError(KBIGERError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class UnanswerableError(DataError):
    """No gold answer survives subgraph extraction."""


class NumericError(KBIGERError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class CheckpointError(KBIGERError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class TruncatedPayloadError(CheckpointError):
    pass
