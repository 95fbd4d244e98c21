"""Simulation and verification toolkit for obliquely reflected diffusions in polyhedra."""

__version__ = "0.1.0"
