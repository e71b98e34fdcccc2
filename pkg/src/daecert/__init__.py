"""Certificates for necessary optimality conditions of DAE-constrained control problems."""

__version__ = "0.1.0"
