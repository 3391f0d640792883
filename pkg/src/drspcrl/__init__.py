"""Distributionally robust RL with a dual-guided robustness-budget curriculum."""

__version__ = "0.1.0"
