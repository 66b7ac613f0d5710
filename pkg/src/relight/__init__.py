"""Reference-guided multi-level low-light image enhancement."""

__version__ = "0.1.0"
