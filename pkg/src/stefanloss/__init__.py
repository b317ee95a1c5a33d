"""Numerical study of loss of embeddedness for the one-phase quasistationary
Stefan problem with Gibbs-Thomson correction and kinetic undercooling in 2D."""

__version__ = "0.1.0"
