"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class P2PError(Exception):
    """Base class for every error raised by this package."""


class DomainError(P2PError, ValueError):
    """An argument lies outside the domain of a formula."""


class ConfigError(DomainError):
    """A configuration value violates a declared invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvariantViolation(P2PError, ValueError):
    """Inputs jointly violate an invariant (e.g. surplus and deficit both positive)."""


class NoMarketError(P2PError):
    """Coalition 2 has no providers or no receivers, so no price can be cleared."""


class DataError(P2PError, ValueError):
    """Time-series input is missing or inconsistent."""


class ReadingsError(DataError):
    """Base for readings-file validation failures; carries the 1-based file row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + message)


class MalformedRowError(ReadingsError):
    pass


class SlotGapError(ReadingsError):
    def __init__(self, prosumer_id: str, slot: int):
        self.prosumer_id = prosumer_id
        self.slot = slot
        super().__init__(f"prosumer {prosumer_id!r} has no reading for slot {slot}")


class NegativeValueError(ReadingsError):
    pass


class DuplicateKeyError(ReadingsError):
    pass


class BundleError(P2PError):
    """A results directory is missing files or cannot be parsed."""
