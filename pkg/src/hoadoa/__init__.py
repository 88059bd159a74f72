"""Higher-order Ambisonics direction-of-arrival toolkit.

Spherical harmonics, room simulation, dataset synthesis, classical DOA
baselines, a small neural layer kernel and evaluation statistics.
"""
from .sh import Direction, angular_distance, encode_direction, n_channels

__version__ = "0.1.0"

__all__ = ["Direction", "angular_distance", "encode_direction", "n_channels", "__version__"]
