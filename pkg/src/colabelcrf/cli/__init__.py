"""colabelcrf command-line interface."""

__all__ = []
