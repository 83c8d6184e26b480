"""Exception hierarchy shared by every stage of the toolkit."""


class TxnSynthError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 1


class ShapeError(TxnSynthError, ValueError):
    exit_code = 2


class UsageError(TxnSynthError, ValueError):
    exit_code = 2


class ValidationError(TxnSynthError, ValueError):
    """Invalid configuration; ``fields`` lists the offending field names."""

    exit_code = 2

    def __init__(self, message, fields=()):
        self.fields = list(fields)
        if self.fields:
            message = f"{message} (fields: {', '.join(self.fields)})"
        super().__init__(message)


class ParseError(TxnSynthError, ValueError):
    """Malformed input file; ``line``/``column`` locate the problem when known."""

    exit_code = 3

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{': '.join([', '.join(loc), message])}"
        super().__init__(message)


class TrainingDivergedError(TxnSynthError, RuntimeError):
    exit_code = 4

    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {message}")
