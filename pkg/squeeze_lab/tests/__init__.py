"""
squeeze-lab - Tests

This package contains tests for squeeze-lab.
"""
