"""Trace-driven toolkit for agenda-based location management in wireless mesh networks."""

__version__ = "0.1.0"
