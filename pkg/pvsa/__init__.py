"""
Probabilistic voltage-sensitivity analysis for unbalanced radial feeders.
"""

__version__ = "1.0.0"
