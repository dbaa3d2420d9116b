"""Exception types shared across the package.

Both derive from ``ValueError`` so callers that only care about bad input can
catch one thing. The CLI maps them onto distinct exit codes.
"""


class ContractError(ValueError):
    """Input violates a shape, range or size contract."""


class FormatError(ValueError):
    """A file on disk is not in the expected binary/text format."""
