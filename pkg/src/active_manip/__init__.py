"""Desk-scale active-manipulation learning stack."""

__version__ = "0.1.0"
