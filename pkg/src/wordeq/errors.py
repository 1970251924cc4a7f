"""Exception hierarchy shared across the package.

Data and format problems derive from :class:`DataError` so the CLI can map them
to a single exit code; runtime failures such as training divergence derive from
:class:`WordEqRuntimeError`.
"""


class WordEqError(Exception):
    pass


class DataError(WordEqError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(DataError):
    pass


class DimensionError(DataError):
    pass


class SchemaError(DataError):
    pass


class FoldConstructionError(DataError):
    pass


class UnresolvableDescriptorError(DataError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unresolvable descriptor"


class CorruptionError(FormatError):
    pass


class WordEqRuntimeError(WordEqError, RuntimeError):
    pass


class DivergenceError(WordEqRuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


class ModelStateError(WordEqRuntimeError):
    pass


class ExperimentError(WordEqRuntimeError):
    pass
