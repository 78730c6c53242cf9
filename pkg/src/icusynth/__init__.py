"""Synthetic ICU time-series generation and evaluation toolkit.

Two-phase generator (recurrent beta-VAE + conditional latent diffusion with
optional distribution-alignment penalties) plus the full evaluation harness:
train/evaluate utility gaps, discriminative fidelity, and intersectional
subgroup error analysis.
"""

__version__ = "0.1.0"
