"""Toolkit for whole-region tumour classification from ordered patch sequences."""

__version__ = "0.1.0"
