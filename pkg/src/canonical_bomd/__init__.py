"""Exact canonical quantum observables versus weighted Born-Oppenheimer MD."""

__version__ = "0.1.0"
