"""Modular quadrotor assemblies: actuation model, geometric control, allocation and simulation."""

__version__ = "0.1.0"
