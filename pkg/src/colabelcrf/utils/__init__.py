"""File formats, metrics and the synthetic video generator."""

__all__ = ["formats", "metrics", "synth"]
