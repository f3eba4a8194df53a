"""Superpositions of a thermodynamic quench and its time-reversed twin."""

__version__ = "0.1.0"
