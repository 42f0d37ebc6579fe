"""Desk-scale p-adic valuations of Hecke L-values over imaginary quadratic fields."""

__version__ = "0.1.0"
