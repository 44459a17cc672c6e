"""Simulation and estimation tools for localized NV-centre formation in diamond nanostructures."""

__version__ = "0.1.0"
