"""Semiclassical tools for laser control of molecular dynamics.

Grid quantum dynamics, Zhu-Nakamura crossing theory, Herman-Kluk
propagation (single and multi-surface), and optimal control.
"""

__version__ = "0.1.0"
