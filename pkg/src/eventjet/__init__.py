"""High-order Taylor maps to event manifolds for neural feedback controllers."""

__version__ = "0.1.0"
