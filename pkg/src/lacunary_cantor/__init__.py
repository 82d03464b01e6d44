"""Cantor-like level sets of iterate series of finite Blaschke products."""

__version__ = "0.1.0"
