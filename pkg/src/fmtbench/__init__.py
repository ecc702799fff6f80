"""Finite-model-theory workbench: Scott analysis, an infinitary-to-first-order compiler,
atomicity checks and additively colored linear orders."""

__version__ = "0.1.0"
