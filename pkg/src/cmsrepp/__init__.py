"""Return-time statistics to shrinking cylinders in countable Markov shifts."""

__version__ = "0.1.0"
