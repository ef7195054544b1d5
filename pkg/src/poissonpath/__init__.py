"""Length-optimal CNC finishing tool paths from a Poisson-fitted scalar field."""

__version__ = "0.1.0"
