"""Exception types shared across the toolkit."""


class CptError(Exception):
    """Base class for all toolkit errors."""


class InputError(CptError):
    """Bad user input: malformed files, invalid arguments, contract violations."""


class InternalError(CptError):
    """An internal invariant was violated; indicates a bug, not bad input."""
