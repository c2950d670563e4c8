"""Numerical verification toolkit for nonlocal Schrodinger-type operators L_K + V."""

__version__ = "0.1.0"
