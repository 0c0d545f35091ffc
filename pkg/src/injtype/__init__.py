"""Entity-guided text generation with type injection."""

__version__ = "0.1.0"
