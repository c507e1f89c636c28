"""Attack-graph analysis of speculative-execution gadgets."""

__version__ = "0.1.0"
