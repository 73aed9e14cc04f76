"""Exact finite-depth checks of measure-zero, second-category subgroup constructions."""

__version__ = "0.1.0"
