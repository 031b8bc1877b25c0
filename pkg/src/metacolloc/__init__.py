"""Meta-learned neural basis dictionaries for collocation PDE solves."""

__version__ = "0.1.0"
