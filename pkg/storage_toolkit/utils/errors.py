"""Exception hierarchy shared by every storage_toolkit module."""

__all__ = [
    "StorageToolkitError",
    "InvalidArgumentError",
    "InfeasibleInstanceError",
    "MarginInfeasibleError",
    "UnsupportedLossError",
    "OracleBudgetError",
    "CrossCheckError",
    "DataFormatError",
]


class StorageToolkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(StorageToolkitError, ValueError):
    pass


class InfeasibleInstanceError(StorageToolkitError):
    """No control satisfies every constraint of the instance."""

    def __init__(self, message: str, largest_reachable_level: float | None = None,
                 method: str | None = None):
        super().__init__(message)
        self.largest_reachable_level = largest_reachable_level
        self.method = method


class MarginInfeasibleError(InfeasibleInstanceError):
    """The capacity margin shrinks the fill-level grid below the required levels."""


class UnsupportedLossError(StorageToolkitError, NotImplementedError):
    pass


class OracleBudgetError(StorageToolkitError):
    def __init__(self, required_nodes: int, max_nodes: int):
        super().__init__(
            f"Enumeration needs {required_nodes} leaves, budget is {max_nodes}"
        )
        self.required_nodes = required_nodes
        self.max_nodes = max_nodes


class CrossCheckError(StorageToolkitError, AssertionError):
    """A certified inequality between rbdp and the oracle failed."""

    def __init__(self, message: str, dump: str):
        super().__init__(f"{message}\n{dump}")
        self.dump = dump


class DataFormatError(StorageToolkitError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}" if path is not None else "<input>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
