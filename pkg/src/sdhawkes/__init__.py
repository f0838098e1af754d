"""Online clustering of geolocated text streams.

Posts (time, words, planar location) are assigned to latent spatiotemporal
patterns by a particle filter; each pattern couples a self-exciting temporal
kernel with collapsed Dirichlet-multinomial content and isotropic Gaussian
spatial models.
"""

from .types import (
    ClusteringResult,
    GeoPost,
    Hyperparams,
    Particle,
    PatternStats,
    PatternSummary,
)
from .hawkes import TimeKernel
from .generate import SynthConfig, SynthResult, generate
from .smc import EngineConfig, ParticleSystem

__all__ = [
    "ClusteringResult",
    "EngineConfig",
    "GeoPost",
    "Hyperparams",
    "Particle",
    "ParticleSystem",
    "PatternStats",
    "PatternSummary",
    "SynthConfig",
    "SynthResult",
    "TimeKernel",
    "generate",
]
