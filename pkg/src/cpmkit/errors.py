"""Exception hierarchy shared by all modules."""


class CpmError(Exception):
    """Base class for every error raised by cpmkit."""


class DomainError(CpmError, ValueError):
    """An argument lies outside the domain of an operation."""


class ParseError(CpmError, ValueError):
    """Input bytes or text do not follow the expected format."""
