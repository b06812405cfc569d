"""Toolkit for measuring, simulating, and analyzing FaaS performance variability."""

__version__ = "0.1.0"
