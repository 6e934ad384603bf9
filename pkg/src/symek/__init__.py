"""Symmetric Ekeland variational principle on discrete function spaces."""

__version__ = "0.1.0"
