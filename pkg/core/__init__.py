"""
Core numerics: grids, target metrics, map distances, convergence and radius bounds
"""
