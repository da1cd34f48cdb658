class RNNDescentError(Exception):
    """Base class for errors raised by this package."""


class DataError(RNNDescentError, ValueError):
    """Malformed or inconsistent input data (vector files, index files, ids)."""


class ParameterError(RNNDescentError, ValueError):
    """A parameter is outside its valid range.

    ``name`` is the parameter's name, so callers (the CLI in particular) can
    point the user at the offending flag.
    """

    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name
