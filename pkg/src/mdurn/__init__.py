"""Two-color urn with random multidrawing and random reinforcement: simulation and testing."""

__version__ = "0.1.0"
