"""relabelkit: human-in-the-loop upgrade of single-label datasets to multi-label."""

__version__ = "0.1.0"
