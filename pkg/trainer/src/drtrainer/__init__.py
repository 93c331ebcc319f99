"""Toy-scale neural stand-ins exporting into the grading pipeline formats."""

__version__ = "0.1.0"
