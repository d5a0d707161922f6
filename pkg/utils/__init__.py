"""
Utility functions and helpers: file formats, example families, plotting, workers
"""
