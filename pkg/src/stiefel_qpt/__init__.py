"""Quantum process tomography by optimizing Kraus operators on the Stiefel manifold."""

__version__ = "0.1.0"
