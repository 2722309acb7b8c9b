"""Lattice-surgery Bell measurements across a module interface: circuit
compiler, Pauli-frame sampler, matching decoder and analysis tools."""

__version__ = "0.1.0"
