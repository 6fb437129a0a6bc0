"""Steady-state modeling and analysis toolkit for two-media laser threshold magnetometry."""

__version__ = "1.0.0"
