"""Simulation and analysis of vacuum-induced Berry phases in a phase-steered
Jaynes-Cummings system (three-level transmon coupled to a cavity mode)."""

__version__ = "0.1.0"
