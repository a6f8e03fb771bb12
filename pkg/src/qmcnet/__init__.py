"""Data-aware hybrid quantum-classical image classification on a built-in statevector simulator."""

__version__ = "0.1.0"
