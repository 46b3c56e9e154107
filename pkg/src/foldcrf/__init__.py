"""Fragment-free protein conformation sampling and knowledge-based scoring."""

__version__ = "0.1.0"
