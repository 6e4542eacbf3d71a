"""
Utility modules for the squeeze-lab project

This package contains file helpers and contour extraction used across the package.
"""
