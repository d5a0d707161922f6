"""
Unit tests and test utilities
"""
