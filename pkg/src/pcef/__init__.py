"""Privacy-preserving credible evidence fusion over agent networks."""
__version__ = "0.1.0"
