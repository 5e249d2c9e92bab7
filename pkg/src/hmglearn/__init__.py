"""Three-view heterogeneous molecular graph learning."""

__version__ = "0.1.0"
