"""
Physics modules for the squeeze-lab project

This package contains the steady-state model, the output squeezing spectra
and the stability analysis of the linearized optomechanical system.
"""
