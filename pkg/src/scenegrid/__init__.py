"""Grid-based multi-agent traffic scenario synthesis."""

__version__ = "0.1.0"
