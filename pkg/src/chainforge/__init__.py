"""Entity-level temporal transaction graphs from raw Bitcoin block data."""

__version__ = "0.1.0"
