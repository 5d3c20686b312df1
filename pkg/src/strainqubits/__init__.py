"""Color-center qubits coupled through the flexural phonons of a clamped nanoribbon."""

__version__ = "0.1.0"
