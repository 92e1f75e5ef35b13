"""Shared exception base for the modelquery package."""


class ModelQueryError(Exception):
    """Base class for every error raised by this package."""
