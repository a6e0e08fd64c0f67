"""Simple (DSIC, budget-balanced, IR) mechanisms for one seller and two buyers."""

__version__ = "0.1.0"
