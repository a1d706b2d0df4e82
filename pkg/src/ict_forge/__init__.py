"""Orchestration for in-context training of reflector/actor prompt loops."""

__version__ = "0.1.0"
