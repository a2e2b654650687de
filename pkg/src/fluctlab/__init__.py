"""Numerical laboratory for fluctuations of mean-field particle systems with common noise."""

from __future__ import annotations

__version__ = "0.1.0"
