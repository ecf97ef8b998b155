"""Shared exception base so callers can catch everything from one root."""


class StatebuddyError(Exception):
    """Base class for every error raised by this package."""
