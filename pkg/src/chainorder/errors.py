"""Exception hierarchy shared by every module."""


class ChainOrderError(Exception):
    """Base class for all library errors."""


class DuplicateAssociation(ChainOrderError, ValueError):
    pass


class SelfAssociation(ChainOrderError, ValueError):
    pass


class UnknownReference(ChainOrderError, LookupError):
    pass


class UnknownChain(ChainOrderError, LookupError):
    pass


class EmptyChain(ChainOrderError, ValueError):
    pass


class UnknownBlock(ChainOrderError, LookupError):
    pass


class UnknownEvent(ChainOrderError, LookupError):
    pass


class CyclicReferences(ChainOrderError, ValueError):
    pass


class InvalidSnapshot(ChainOrderError, ValueError):
    """Raised when a snapshot fails verification; carries the violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  {v}" for v in self.violations[:20])
        more = len(self.violations) - 20
        if more > 0:
            lines += f"\n  ... and {more} more"
        super().__init__(f"snapshot failed verification:\n{lines}")


class Overflow(ChainOrderError):
    """Enumeration found more linear extensions than the caller's limit."""

    def __init__(self, limit: int, found: list):
        self.limit = limit
        self.found = found
        self.count = len(found)
        super().__init__(f"more than {limit} linear extensions (stopped at {self.count})")


class TooLarge(ChainOrderError, ValueError):
    pass


class InvalidWindow(ChainOrderError, ValueError):
    pass


class NotOrdered(ChainOrderError):
    pass


class InvalidConfig(ChainOrderError, ValueError):
    pass


class InvalidTrace(ChainOrderError, ValueError):
    pass


class ParseError(ChainOrderError, ValueError):
    """Malformed snapshot/config/trace document; ``path`` names the bad field."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<document>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")
