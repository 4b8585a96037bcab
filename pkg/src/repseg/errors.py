class RepsegError(Exception):
    """Base class for data and validation failures (CLI exit code 3)."""


class ValidationError(RepsegError, ValueError):
    pass


class ParseError(RepsegError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyInputError(RepsegError, ValueError):
    pass


class InputTooShortError(RepsegError, ValueError):
    pass


class NoRepetitionsError(RepsegError, ValueError):
    pass
