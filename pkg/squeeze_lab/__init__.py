"""
squeeze-lab: ponderomotive squeezing with dispersive and dissipative optomechanical coupling
"""

__version__ = "0.1.0"
