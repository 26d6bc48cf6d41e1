"""Numerical toolkit for sign-changing bubble-tower solutions of
(-Delta)^s u = |u|^{p-1} u on R^N at the critical exponent.

The package builds the k-bubble ansatz (one positive bubble at the origin
minus k shrunk copies on a horizontal circle), measures its closed-form
residual in weighted norms, runs the finite-dimensional reduction that
selects the concentration parameter, and refines the ansatz on a periodic
grid with a Fourier-multiplier fractional Laplacian.
"""

from .core import ProblemParams, BubbleConfig, make_config, pairwise_center_distance
from .bubbles import (
    amplitude,
    standard_bubble,
    scaled_bubble,
    ring_bubble,
    kernel_field,
    kelvin_transform,
    symmetry_orbit,
)
from .ansatz import Ansatz, nonlinear_remainder, bubble_cutoff, glued_potentials

__all__ = [
    "ProblemParams",
    "BubbleConfig",
    "make_config",
    "pairwise_center_distance",
    "amplitude",
    "standard_bubble",
    "scaled_bubble",
    "ring_bubble",
    "kernel_field",
    "kelvin_transform",
    "symmetry_orbit",
    "Ansatz",
    "nonlinear_remainder",
    "bubble_cutoff",
    "glued_potentials",
]

__version__ = "0.1.0"
