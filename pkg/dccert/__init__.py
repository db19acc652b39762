"""dccert - optimality certificates for DC (difference-of-convex) programs."""

__version__ = "0.1.0"
