"""
squeeze-lab - Scripts

This package contains standalone scripts for squeeze-lab.
"""
