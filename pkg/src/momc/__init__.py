"""Multi-objective total-reward model checking with convex queries."""

__version__ = "0.1.0"
