"""
Configuration files and settings
"""
