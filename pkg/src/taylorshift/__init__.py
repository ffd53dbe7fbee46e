"""Taylor backward shift on Bergman spaces of cusp-decorated planar domains."""

__version__ = "0.1.0"
