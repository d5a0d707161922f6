"""
Mapdist - distances, convergence diagnostics and limit construction for partial maps with varying domains
"""

__version__ = "1.0.0"
__author__ = "Mapdist Team"
