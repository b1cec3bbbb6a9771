"""Quantum-trajectory simulation with a Born-Oppenheimer no-jump propagator."""

__version__ = "0.1.0"
