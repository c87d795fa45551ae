"""Core colabelcrf functionality: lattice filtering, the CRF model and its solvers."""

__all__ = ["api", "errors", "hoc", "lattice", "model", "performance", "segments", "solver"]
